#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "serec/rating_core.hpp"

namespace serec {

enum class RefitSchedule { once, every, every_n };

struct RegularHyper {
  Index k_sr = 30;
  double lambda_sr = 5.0;
  double lambda_x = 1.0;
  double lambda_t = 1.0;
  double lambda_b = 1.0;
  double lambda_gamma = 1.0;
  double learning_rate = 0.01;
  int n_sgd_epochs = 10;
  RefitSchedule refit = RefitSchedule::once;
  int refit_interval = 1;  // used by every_n
  double init_scale = 0.01;

  void validate() const;
};

// Exposure factors: mu_ui = x_u . t_i + gamma_i, with truster vectors x shared
// with the trust factorisation x_u . b_k ~ s_uk.
struct RegularState {
  Matrix x;      // n_users x k_sr
  Matrix t;      // n_items x k_sr
  Matrix b;      // n_users x k_sr, trustee vectors
  Vector gamma;  // n_items

  bool finite() const { return x.allFinite() && t.allFinite() && b.allFinite() && gamma.allFinite(); }
};

// Regression target for one (user, item) pair.
struct ExposureTarget {
  Index user;
  Index item;
  double target;
};

struct Triplet {
  Index item;
  Index user;
  Index trustee;
  double target;  // regression target for mu_ui
  double trust;   // s_uk in {0, 1}
};

struct HalfGradients {
  Vector t;
  Vector x;
  Vector b;
  double gamma = 0.0;
};

// Target for an observed pair: share of users who clicked the item, clamped.
double observed_target(Index item_clicks, Index n_users);

// Observed pairs get observed_target(); `n_negatives` unobserved pairs drawn
// uniformly (seeded) get their current posterior p_ui.
std::vector<ExposureTarget> build_targets(const InteractionMatrix& y, const Posterior& p, Index n_negatives,
                                          std::uint64_t seed);

// Sampled loss of one triplet:
//   (x_u.t_i + g_i - target)^2 + lambda_sr (x_u.b_k - s_uk)^2
//   + lambda_x |x_u|^2 + lambda_t |t_i|^2 + lambda_b |b_k|^2 + lambda_gamma g_i^2
double triplet_loss(const RegularState& state, const Triplet& tr, const RegularHyper& hyper);

// Half the gradient of triplet_loss with respect to t_i, x_u, b_k and g_i.
HalfGradients triplet_half_gradients(const RegularState& state, const Triplet& tr, const RegularHyper& hyper);

// Simultaneous step on all four parameter blocks: param -= lr * half_gradient.
void sgd_triplet_step(RegularState& state, const Triplet& tr, const RegularHyper& hyper, double lr);

// Sum of triplet_loss over a triplet set: the stochastic objective the SGD
// steps descend.
double sampled_objective(const RegularState& state, const std::vector<Triplet>& triplets, const RegularHyper& hyper);

// Attaches a trust partner to every target: a random friend (s_uk = 1) when
// the user has friends, else a random non-friend other user (s_uk = 0).
std::vector<Triplet> attach_trustees(const std::vector<ExposureTarget>& targets, const SocialGraph& social,
                                     std::uint64_t seed);

struct SgdReport {
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int epochs = 0;
};

// Runs n_sgd_epochs over all observed pairs plus an equal number of freshly
// sampled unobserved pairs per epoch. Throws TrainingError on non-finite
// parameters or when the objective grows past 10x its initial value.
SgdReport fit_exposure(RegularState& state, const InteractionMatrix& y, const Posterior& p,
                       const SocialGraph& social, const RegularHyper& hyper, std::uint64_t seed);

double regular_mu(const RegularState& state, Index user, Index item);

class RegularExposure final : public ExposureModel {
 public:
  RegularExposure(const InteractionMatrix& train, SocialGraph social, RegularHyper hyper, std::uint64_t seed);
  RegularExposure(RegularState state, SocialGraph social, RegularHyper hyper, std::uint64_t seed);
  static RegularExposure load(const std::filesystem::path& dir, SocialGraph social, RegularHyper hyper,
                              std::uint64_t seed);

  std::string kind() const override { return "serec-regular"; }
  void prior_block(Index u0, Index i0, Eigen::Ref<Matrix> out) const override;
  void update(const InteractionMatrix& y, const Posterior& p, const FactorModel& model, int em_iter) override;
  void save(const std::filesystem::path& dir) const override;

  const RegularState& state() const { return state_; }
  const std::vector<SgdReport>& reports() const { return reports_; }

 private:
  bool should_refit(int em_iter) const;

  RegularState state_;
  SocialGraph social_;
  RegularHyper hyper_;
  std::uint64_t seed_;
  std::vector<SgdReport> reports_;
};

}  // namespace serec
