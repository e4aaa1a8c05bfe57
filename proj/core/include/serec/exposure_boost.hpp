#pragma once

#include <filesystem>
#include <functional>
#include <span>

#include "serec/rating_core.hpp"

namespace serec {

// Exposure mass user u receives from friends for one item, given that item's
// posterior column p_{.i}. This is the pluggable social function; the default
// is the linear sum over Friends(u).
using FriendMass = std::function<double(const SocialGraph& graph, std::span<const double> p_column, Index user)>;

double linear_friend_mass(const SocialGraph& graph, std::span<const double> p_column, Index user);

// sum_{f in Friends(u)} s * p_fi
double phi_social(const SocialGraph& graph, const Posterior& p, Index user, Index item, double s_coeff);

// Mode of Beta(alpha1 + colsum + (s-1) mass, alpha2 + U - colsum):
//   (alpha1 + colsum + (s-1) mass - 1) / (alpha1 + alpha2 + U + (s-1) mass - 2), clamped.
// Throws std::invalid_argument when the denominator is not positive.
double boost_mu(double column_sum, double friend_mass, double s_coeff, double alpha1, double alpha2, Index n_users);

// Dense update of every mu_ui from a dense posterior.
Matrix boost_update_mu(const Matrix& p, const SocialGraph& graph, double s_coeff, double alpha1, double alpha2,
                       const FriendMass& mass = linear_friend_mass);

struct BoostHyper {
  double s_coeff = 5.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;

  void validate() const;
};

// Per-pair exposure prior boosted by friends' exposure (SERec boost).
// Starts from the item-popularity prior; keeps mu densely.
class BoostExposure final : public ExposureModel {
 public:
  BoostExposure(const InteractionMatrix& train, SocialGraph social, BoostHyper hyper,
                FriendMass mass = linear_friend_mass);

  std::string kind() const override { return "serec-boost"; }
  void prior_block(Index u0, Index i0, Eigen::Ref<Matrix> out) const override;
  void update(const InteractionMatrix& y, const Posterior& p, const FactorModel& model, int em_iter) override;
  bool requires_dense_posterior() const override { return true; }
  // Writes boost.json.
  void save(const std::filesystem::path& dir) const override;
  static BoostHyper load_hyper(const std::filesystem::path& dir);

  const Matrix& mu() const { return mu_; }
  const BoostHyper& hyper() const { return hyper_; }
  const SocialGraph& social() const { return social_; }

 private:
  SocialGraph social_;
  BoostHyper hyper_;
  FriendMass mass_;
  Matrix mu_;
};

}  // namespace serec
