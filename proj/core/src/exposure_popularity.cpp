#include "serec/exposure_popularity.hpp"

#include "tsv.hpp"

namespace serec {

double popularity_mu(double column_sum, Index n_users, double alpha1, double alpha2) {
  const double denom = alpha1 + alpha2 + static_cast<double>(n_users) - 2.0;
  if (!(denom > 0.0)) throw std::invalid_argument("popularity prior: alpha1 + alpha2 + U must exceed 2");
  return clamp_mu((alpha1 + column_sum - 1.0) / denom);
}

Vector popularity_update_mu(const Vector& column_sums, Index n_users, double alpha1, double alpha2) {
  Vector mu(column_sums.size());
  for (Index i = 0; i < mu.size(); ++i) mu[i] = popularity_mu(column_sums[i], n_users, alpha1, alpha2);
  return mu;
}

PopularityExposure::PopularityExposure(Vector mu_items, double alpha1, double alpha2)
    : mu_(std::move(mu_items)), alpha1_(alpha1), alpha2_(alpha2) {
  if (!(alpha1 > 0.0 && alpha2 > 0.0)) throw std::invalid_argument("Beta prior parameters must be positive");
  mu_ = mu_.unaryExpr([](double v) { return clamp_mu(v); });
}

PopularityExposure PopularityExposure::from_popularity(const InteractionMatrix& y, double alpha1, double alpha2) {
  Vector mu(y.n_items());
  const double U = static_cast<double>(std::max<Index>(1, y.n_users()));
  for (Index i = 0; i < y.n_items(); ++i) mu[i] = static_cast<double>(y.item_count(i)) / U;
  return PopularityExposure(std::move(mu), alpha1, alpha2);
}

PopularityExposure PopularityExposure::load(const std::filesystem::path& dir, double alpha1, double alpha2) {
  return PopularityExposure(tsv::read_vector(dir / "mu_items.tsv"), alpha1, alpha2);
}

void PopularityExposure::prior_block(Index, Index i0, Eigen::Ref<Matrix> out) const {
  out.rowwise() = mu_.segment(i0, out.cols()).transpose();
}

void PopularityExposure::update(const InteractionMatrix& y, const Posterior& p, const FactorModel&, int) {
  mu_ = popularity_update_mu(p.column_sums(), y.n_users(), alpha1_, alpha2_);
}

void PopularityExposure::save(const std::filesystem::path& dir) const { tsv::write_vector(dir / "mu_items.tsv", mu_); }

double fixed_exposure_p(bool observed, double mu_unobserved) { return observed ? 1.0 : mu_unobserved; }

FixedExposure::FixedExposure(double mu_unobserved) : mu_unobserved_(mu_unobserved) {
  if (!(mu_unobserved > 0.0 && mu_unobserved <= 1.0))
    throw std::invalid_argument("mu_unobserved must lie in (0, 1]");
}

void FixedExposure::prior_block(Index, Index, Eigen::Ref<Matrix> out) const { out.setConstant(mu_unobserved_); }

void FixedExposure::save(const std::filesystem::path&) const {}

}  // namespace serec
