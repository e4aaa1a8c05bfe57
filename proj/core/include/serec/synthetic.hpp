#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "serec/data.hpp"

namespace serec {

struct SyntheticSpec {
  Index n_users = 200;
  Index n_items = 200;
  Index k = 5;
  double lambda_theta = 1.0;
  double lambda_beta = 1.0;
  double lambda_y = 1.0;
  // Probability of each directed trust edge.
  double social_density = 0.03;
  // Typical inner exposure of an item; per-item values spread around it.
  double base_exposure = 0.05;
  // Exposure probability contributed by each friend exposed on their own.
  double s_coeff = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

// Ground truth alongside the sampled observations.
struct SyntheticData {
  InteractionMatrix clicks;
  SocialGraph graph;
  Matrix theta;        // n_users x k
  Matrix beta;         // n_items x k
  Vector inner;        // per-item inner exposure e_i
  Matrix mu;           // n_users x n_items exposure prior
  Eigen::MatrixXi alpha;  // realised exposure (0/1)
};

// Samples the exposure-gated click process:
//   theta_u ~ N(0, I/lambda_theta), beta_i ~ N(0, I/lambda_beta)
//   e_i = 1 - (1 - base_exposure)^{w_i}, w_i ~ Exp(1)
//   own exposure a0_ui ~ Bernoulli(e_i)
//   mu_ui = 1 - (1 - e_i)(1 - min(1, s_coeff * sum_{f in Friends(u)} a0_fi))
//   alpha_ui = a0_ui OR Bernoulli(min(1, s_coeff * sum_f a0_fi))   (so P(alpha=1) = mu)
//   y_ui = alpha_ui * Bernoulli(logistic(theta_u . beta_i))
SyntheticData generate(const SyntheticSpec& spec);

// Writes interactions.tsv, social.tsv (ids are "u<index>", "i<index>") and
// truth/{theta,beta,mu}.tsv.
void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data);

// P(alpha = 1 | y = 0) by explicit enumeration of alpha in {0, 1}.
double brute_force_posterior(double mu, double score, double lambda_y);

// Central differences (f(x + h e_j) - f(x - h e_j)) / 2h for every coordinate.
// Throws std::domain_error when f is not finite at a probe point.
Vector finite_difference(const std::function<double(const Vector&)>& f, const Vector& point, double h = 1e-5);

}  // namespace serec
