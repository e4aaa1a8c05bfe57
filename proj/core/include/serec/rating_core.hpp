#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "serec/common.hpp"
#include "serec/data.hpp"

namespace serec {

// Latent factors of the rating component: user preferences (rows of theta)
// and item attributes (rows of beta), with their Gaussian precisions.
struct FactorModel {
  Matrix theta;  // n_users x k
  Matrix beta;   // n_items x k
  double lambda_theta = 0.01;
  double lambda_beta = 0.01;
  double lambda_y = 0.01;

  Index k() const { return theta.cols(); }
  Index n_users() const { return theta.rows(); }
  Index n_items() const { return beta.rows(); }
  bool finite() const { return theta.allFinite() && beta.allFinite(); }
};

struct TrainConfig {
  Index k = 20;
  double lambda_theta = 0.01;
  double lambda_beta = 0.01;
  double lambda_y = 0.01;
  int max_em_iters = 50;
  double convergence_tol = 1e-5;
  std::uint64_t seed = 0;
  double init_scale = 0.01;
  // Posterior is materialised densely when n_users * n_items fits this budget.
  Index dense_budget = 200'000'000;
  // 0 means all available cores.
  int threads = 0;

  void validate() const;
};

class Posterior;

// Supplies the exposure prior mu_ui to the rating engine and refreshes it from
// the posterior after each M-step.
class ExposureModel {
 public:
  virtual ~ExposureModel() = default;

  virtual std::string kind() const = 0;

  // Writes mu for users [u0, u0 + out.rows()) x items [i0, i0 + out.cols()).
  virtual void prior_block(Index u0, Index i0, Eigen::Ref<Matrix> out) const = 0;

  // Called once per EM iteration after the factor updates. Implementations
  // must read everything they need from `p` before changing their own state,
  // since a streamed posterior evaluates lazily through prior_block().
  virtual void update(const InteractionMatrix& y, const Posterior& p, const FactorModel& model, int em_iter) = 0;

  // When set, the engine skips the Bayes E-step and uses this constant weight
  // for every unobserved pair (1 for observed pairs).
  virtual std::optional<double> fixed_unobserved_weight() const { return std::nullopt; }

  virtual bool requires_dense_posterior() const { return false; }

  virtual void save(const std::filesystem::path& dir) const = 0;
};

// p_ui = E[alpha_ui | y_ui] for every user-item pair. Either held densely
// (column-major n_users x n_items) or evaluated lazily per block from a
// snapshot of the factors and the exposure prior.
class Posterior {
 public:
  static Posterior dense(Matrix values);
  static Posterior streamed(const InteractionMatrix& y, const FactorModel& snapshot, const ExposureModel& prior);

  Index n_users() const { return n_users_; }
  Index n_items() const { return n_items_; }
  bool is_dense() const { return dense_.has_value(); }

  // Only valid when is_dense().
  const Matrix& values() const { return *dense_; }

  double at(Index u, Index i) const;
  void block(Index u0, Index i0, Eigen::Ref<Matrix> out) const;
  // sum_u p_ui for every item.
  Vector column_sums() const;

 private:
  Posterior() = default;

  Index n_users_ = 0;
  Index n_items_ = 0;
  std::optional<Matrix> dense_;
  // Streamed mode.
  const InteractionMatrix* y_ = nullptr;
  const ExposureModel* prior_ = nullptr;
  std::shared_ptr<const FactorModel> snapshot_;
};

// Posterior probability of exposure for an unobserved pair:
// mu N(0 | score, 1/lambda_y) / (mu N(0 | score, 1/lambda_y) + 1 - mu).
double e_step_pair(double mu, double score, double lambda_y);

double gaussian_log_density(double x, double mean, double precision);

// Full E-step: p = 1 on observed pairs, e_step_pair elsewhere. The provider's
// mu must lie in [0, 1] (std::domain_error otherwise); it is clamped into
// [kMuFloor, kMuCeil] before use.
Posterior e_step(const InteractionMatrix& y, const FactorModel& model, const ExposureModel& provider,
                 Index dense_budget = TrainConfig{}.dense_budget);

// Closed-form ridge updates; every row is the unique minimiser of its
// weighted least-squares objective given the opposite factors.
Matrix update_user_factors(const InteractionMatrix& y, const Posterior& p, const FactorModel& model);
Matrix update_item_factors(const InteractionMatrix& y, const Posterior& p, const FactorModel& model);

// Marginal log likelihood of the clicks plus the Gaussian factor priors:
//   sum_{Y-} log(mu N(0|s) + 1 - mu) + sum_{Y+} log(mu N(1|s))
//     - lambda_theta/2 |theta|^2 - lambda_beta/2 |beta|^2.
// Uses the provider's mu as given. Throws std::domain_error when an observed
// pair has mu = 0.
double log_likelihood(const InteractionMatrix& y, const FactorModel& model, const ExposureModel& provider);

// Weighted least-squares objective used when the provider fixes the posterior:
//   -lambda_y/2 sum w_ui (y_ui - s_ui)^2 - lambda_theta/2 |theta|^2 - lambda_beta/2 |beta|^2.
double weighted_objective(const InteractionMatrix& y, const FactorModel& model, double unobserved_weight);

struct FitResult {
  FactorModel model;
  // Objective after each completed iteration.
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
};

FitResult fit(const InteractionMatrix& train, ExposureModel& provider, const TrainConfig& cfg);

// scores_i = theta_u . beta_i
Vector predict_scores(const FactorModel& model, Index user);

// Thread count for the parallel phases (0 = all cores). Eigen's own
// threading is disabled so results do not depend on it.
void set_thread_count(int threads);

}  // namespace serec
