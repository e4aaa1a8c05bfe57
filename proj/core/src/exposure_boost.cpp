#include "serec/exposure_boost.hpp"

#include <atomic>
#include <fstream>

#include <json.hpp>

#include "tsv.hpp"

namespace serec {

double linear_friend_mass(const SocialGraph& graph, std::span<const double> p_column, Index user) {
  double mass = 0.0;
  for (Index f : graph.friends(user)) mass += p_column[static_cast<std::size_t>(f)];
  return mass;
}

double phi_social(const SocialGraph& graph, const Posterior& p, Index user, Index item, double s_coeff) {
  double total = 0.0;
  for (Index f : graph.friends(user)) total += s_coeff * p.at(f, item);
  return total;
}

double boost_mu(double column_sum, double friend_mass, double s_coeff, double alpha1, double alpha2, Index n_users) {
  const double social = (s_coeff - 1.0) * friend_mass;
  const double denom = alpha1 + alpha2 + static_cast<double>(n_users) + social - 2.0;
  if (!(denom > 0.0)) throw std::invalid_argument("boosted prior: non-positive Beta mode denominator");
  return clamp_mu((alpha1 + column_sum + social - 1.0) / denom);
}

Matrix boost_update_mu(const Matrix& p, const SocialGraph& graph, double s_coeff, double alpha1, double alpha2,
                       const FriendMass& mass) {
  if (graph.n_users() != p.rows()) throw std::invalid_argument("boost_update_mu: graph size mismatch");
  const Index U = p.rows();
  const Index V = p.cols();
  if (!(alpha1 + alpha2 + static_cast<double>(U) - 2.0 > 0.0))
    throw std::invalid_argument("boosted prior: non-positive Beta mode denominator");
  Matrix mu(U, V);
  // Same reduction as Posterior::column_sums, so s = 1 reproduces the
  // popularity prior bit for bit.
  const Vector column_sums = p.colwise().sum().transpose();
  std::atomic<bool> failed{false};
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < V; ++i) {
    const std::span<const double> column(p.col(i).data(), static_cast<std::size_t>(U));
    const double column_sum = column_sums(i);
    try {
      for (Index u = 0; u < U; ++u)
        mu(u, i) = boost_mu(column_sum, mass(graph, column, u), s_coeff, alpha1, alpha2, U);
    } catch (...) {
      failed = true;
    }
  }
  if (failed) throw std::invalid_argument("boosted prior: non-positive Beta mode denominator");
  return mu;
}

void BoostHyper::validate() const {
  if (!(s_coeff >= 1.0)) throw std::invalid_argument("s_coeff must be >= 1");
  if (!(alpha1 > 0.0 && alpha2 > 0.0)) throw std::invalid_argument("Beta prior parameters must be positive");
}

BoostExposure::BoostExposure(const InteractionMatrix& train, SocialGraph social, BoostHyper hyper, FriendMass mass)
    : social_(std::move(social)), hyper_(hyper), mass_(std::move(mass)) {
  hyper_.validate();
  if (social_.n_users() != train.n_users())
    throw std::invalid_argument("social graph and interactions disagree on the user count");
  mu_.resize(train.n_users(), train.n_items());
  const double U = static_cast<double>(std::max<Index>(1, train.n_users()));
  for (Index i = 0; i < train.n_items(); ++i)
    mu_.col(i).setConstant(clamp_mu(static_cast<double>(train.item_count(i)) / U));
}

void BoostExposure::prior_block(Index u0, Index i0, Eigen::Ref<Matrix> out) const {
  out = mu_.block(u0, i0, out.rows(), out.cols());
}

void BoostExposure::update(const InteractionMatrix&, const Posterior& p, const FactorModel&, int) {
  if (!p.is_dense()) throw std::invalid_argument("serec-boost needs a dense posterior");
  mu_ = boost_update_mu(p.values(), social_, hyper_.s_coeff, hyper_.alpha1, hyper_.alpha2, mass_);
}

void BoostExposure::save(const std::filesystem::path& dir) const {
  nlohmann::json j = {{"s_coeff", hyper_.s_coeff}, {"alpha1", hyper_.alpha1}, {"alpha2", hyper_.alpha2}};
  tsv::open_out(dir / "boost.json") << j.dump(2) << '\n';
}

BoostHyper BoostExposure::load_hyper(const std::filesystem::path& dir) {
  std::ifstream in(dir / "boost.json");
  if (!in) throw ParseError((dir / "boost.json").string(), 0, "cannot open file");
  const auto j = nlohmann::json::parse(in);
  BoostHyper h{j.at("s_coeff").get<double>(), j.at("alpha1").get<double>(), j.at("alpha2").get<double>()};
  h.validate();
  return h;
}

}  // namespace serec
