#pragma once

#include <filesystem>

#include "serec/rating_core.hpp"

namespace serec {

// Beta-mode update of a per-item exposure prior:
//   mu_i = (alpha1 + sum_u p_ui - 1) / (alpha1 + alpha2 + U - 2), clamped.
// Throws std::invalid_argument when alpha1 + alpha2 + U <= 2.
double popularity_mu(double column_sum, Index n_users, double alpha1, double alpha2);
Vector popularity_update_mu(const Vector& column_sums, Index n_users, double alpha1, double alpha2);

// Item-popularity exposure prior shared by all users (ExpoMF).
class PopularityExposure final : public ExposureModel {
 public:
  PopularityExposure(Vector mu_items, double alpha1 = 1.0, double alpha2 = 1.0);
  // Starts from the observed click rate n_i / U of every item.
  static PopularityExposure from_popularity(const InteractionMatrix& y, double alpha1 = 1.0, double alpha2 = 1.0);
  static PopularityExposure load(const std::filesystem::path& dir, double alpha1 = 1.0, double alpha2 = 1.0);

  std::string kind() const override { return "expomf"; }
  void prior_block(Index u0, Index i0, Eigen::Ref<Matrix> out) const override;
  void update(const InteractionMatrix& y, const Posterior& p, const FactorModel& model, int em_iter) override;
  void save(const std::filesystem::path& dir) const override;

  const Vector& mu_items() const { return mu_; }
  double alpha1() const { return alpha1_; }
  double alpha2() const { return alpha2_; }

 private:
  Vector mu_;
  double alpha1_;
  double alpha2_;
};

// 1 for observed pairs, mu_unobserved otherwise.
double fixed_exposure_p(bool observed, double mu_unobserved);

// Constant-weight posterior; turns the EM engine into weighted ALS (WMF).
class FixedExposure final : public ExposureModel {
 public:
  explicit FixedExposure(double mu_unobserved = 0.4);

  std::string kind() const override { return "wmf"; }
  void prior_block(Index u0, Index i0, Eigen::Ref<Matrix> out) const override;
  void update(const InteractionMatrix&, const Posterior&, const FactorModel&, int) override {}
  std::optional<double> fixed_unobserved_weight() const override { return mu_unobserved_; }
  void save(const std::filesystem::path& dir) const override;

  double mu_unobserved() const { return mu_unobserved_; }

 private:
  double mu_unobserved_;
};

}  // namespace serec
