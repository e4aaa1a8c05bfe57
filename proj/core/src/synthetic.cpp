#include "serec/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "tsv.hpp"

namespace serec {

void SyntheticSpec::validate() const {
  if (n_users <= 0 || n_items <= 0 || k <= 0) throw std::invalid_argument("synthetic sizes must be positive");
  if (!(lambda_theta > 0 && lambda_beta > 0 && lambda_y > 0))
    throw std::invalid_argument("synthetic precisions must be positive");
  if (!(social_density >= 0 && social_density < 1)) throw std::invalid_argument("social_density must lie in [0, 1)");
  if (!(base_exposure >= 0 && base_exposure <= 1)) throw std::invalid_argument("base_exposure must lie in [0, 1]");
  if (!(s_coeff >= 0)) throw std::invalid_argument("s_coeff must be non-negative");
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  const Index U = spec.n_users, V = spec.n_items, K = spec.k;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> spread(1.0);

  SyntheticData d;
  d.theta.resize(U, K);
  d.beta.resize(V, K);
  const double sd_theta = 1.0 / std::sqrt(spec.lambda_theta);
  const double sd_beta = 1.0 / std::sqrt(spec.lambda_beta);
  for (Index u = 0; u < U; ++u)
    for (Index c = 0; c < K; ++c) d.theta(u, c) = sd_theta * normal(rng);
  for (Index i = 0; i < V; ++i)
    for (Index c = 0; c < K; ++c) d.beta(i, c) = sd_beta * normal(rng);

  d.inner.resize(V);
  for (Index i = 0; i < V; ++i) d.inner[i] = 1.0 - std::pow(1.0 - spec.base_exposure, spread(rng));

  std::vector<Pair> edges;
  for (Index u = 0; u < U; ++u)
    for (Index k = 0; k < U; ++k)
      if (k != u && unit(rng) < spec.social_density) edges.emplace_back(u, k);
  d.graph = SocialGraph(U, std::move(edges));

  Eigen::MatrixXi own(U, V);
  for (Index i = 0; i < V; ++i)
    for (Index u = 0; u < U; ++u) own(u, i) = unit(rng) < d.inner[i] ? 1 : 0;

  d.mu.resize(U, V);
  d.alpha.resize(U, V);
  std::vector<Pair> clicks;
  for (Index i = 0; i < V; ++i) {
    for (Index u = 0; u < U; ++u) {
      Index exposed_friends = 0;
      for (Index f : d.graph.friends(u)) exposed_friends += own(f, i);
      const double social = std::min(1.0, spec.s_coeff * static_cast<double>(exposed_friends));
      d.mu(u, i) = 1.0 - (1.0 - d.inner[i]) * (1.0 - social);
      const bool via_friends = unit(rng) < social;
      d.alpha(u, i) = (own(u, i) == 1 || via_friends) ? 1 : 0;
      if (d.alpha(u, i) == 1) {
        const double score = d.theta.row(u).dot(d.beta.row(i));
        if (unit(rng) < 1.0 / (1.0 + std::exp(-score))) clicks.emplace_back(u, i);
      }
    }
  }
  d.clicks = InteractionMatrix(U, V, std::move(clicks));
  return d;
}

void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir / "truth");
  {
    auto out = tsv::open_out(dir / "interactions.tsv");
    for (const auto& [u, i] : data.clicks.entries()) out << 'u' << u << "\ti" << i << '\n';
  }
  {
    auto out = tsv::open_out(dir / "social.tsv");
    for (const auto& [u, k] : data.graph.edges()) out << 'u' << u << "\tu" << k << '\n';
  }
  tsv::write_matrix(dir / "truth" / "theta.tsv", data.theta);
  tsv::write_matrix(dir / "truth" / "beta.tsv", data.beta);
  tsv::write_matrix(dir / "truth" / "mu.tsv", data.mu);
}

double brute_force_posterior(double mu, double score, double lambda_y) {
  // Joint p(alpha, y = 0) for alpha = 1 and alpha = 0.
  const double density = std::sqrt(lambda_y / (2.0 * std::numbers::pi)) * std::exp(-0.5 * lambda_y * score * score);
  const double joint[2] = {(1.0 - mu) * 1.0, mu * density};
  return joint[1] / (joint[0] + joint[1]);
}

Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& point, double h) {
  Vector grad(point.size());
  Vector probe = point;
  for (Index j = 0; j < point.size(); ++j) {
    probe[j] = point[j] + h;
    const double up = f(probe);
    probe[j] = point[j] - h;
    const double down = f(probe);
    probe[j] = point[j];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::domain_error("finite_difference: non-finite loss at coordinate " + std::to_string(j));
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace serec
