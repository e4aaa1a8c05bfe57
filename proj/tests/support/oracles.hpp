#pragma once

// Reference implementations used to check the library. Each one is written
// from the textbook definition with naive loops and a generic solver, and
// shares no code with serec_core.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline double normal_pdf(double x, double mean, double precision) {
  const double d = x - mean;
  return std::sqrt(precision / (2.0 * std::numbers::pi)) * std::exp(-0.5 * precision * d * d);
}

// Solves (lambda_y sum_j w_j f_j f_j^T + reg I) x = lambda_y sum_j w_j y_j f_j
// for one row, via full-pivot LU on an explicitly accumulated system.
inline Vec ridge_row(const Mat& F, const Vec& w, const Vec& y, double lambda_y, double reg) {
  const Eigen::Index k = F.cols();
  Mat A = Mat::Zero(k, k);
  Vec b = Vec::Zero(k);
  for (Eigen::Index j = 0; j < F.rows(); ++j) {
    for (Eigen::Index a = 0; a < k; ++a) {
      b(a) += lambda_y * w(j) * y(j) * F(j, a);
      for (Eigen::Index c = 0; c < k; ++c) A(a, c) += lambda_y * w(j) * F(j, a) * F(j, c);
    }
  }
  for (Eigen::Index a = 0; a < k; ++a) A(a, a) += reg;
  return A.fullPivLu().solve(b);
}

// Y and W are dense U x V.
inline Mat solve_users(const Mat& Y, const Mat& W, const Mat& beta, double lambda_y, double lambda_theta) {
  Mat theta(Y.rows(), beta.cols());
  for (Eigen::Index u = 0; u < Y.rows(); ++u)
    theta.row(u) = ridge_row(beta, W.row(u).transpose(), Y.row(u).transpose(), lambda_y, lambda_theta).transpose();
  return theta;
}

inline Mat solve_items(const Mat& Y, const Mat& W, const Mat& theta, double lambda_y, double lambda_beta) {
  Mat beta(Y.cols(), theta.cols());
  for (Eigen::Index i = 0; i < Y.cols(); ++i)
    beta.row(i) = ridge_row(theta, W.col(i), Y.col(i), lambda_y, lambda_beta).transpose();
  return beta;
}

// Weighted alternating least squares with weight 1 on clicks and `w0`
// elsewhere, run for `iters` sweeps from the given start.
inline void wals(const Mat& Y, double w0, Mat& theta, Mat& beta, double lambda_y, double lambda_theta,
                 double lambda_beta, int iters) {
  Mat W = Y.unaryExpr([w0](double v) { return v > 0.5 ? 1.0 : w0; });
  for (int t = 0; t < iters; ++t) {
    theta = solve_users(Y, W, beta, lambda_y, lambda_theta);
    beta = solve_items(Y, W, theta, lambda_y, lambda_beta);
  }
}

// Marginal click log-likelihood plus Gaussian factor penalties, summed
// pair by pair with no log-space tricks.
inline double log_likelihood(const Mat& Y, const Mat& mu, const Mat& theta, const Mat& beta, double lambda_y,
                             double lambda_theta, double lambda_beta) {
  double ll = 0.0;
  for (Eigen::Index u = 0; u < Y.rows(); ++u) {
    for (Eigen::Index i = 0; i < Y.cols(); ++i) {
      const double s = theta.row(u).dot(beta.row(i));
      if (Y(u, i) > 0.5) ll += std::log(mu(u, i) * normal_pdf(1.0, s, lambda_y));
      else ll += std::log(mu(u, i) * normal_pdf(0.0, s, lambda_y) + 1.0 - mu(u, i));
    }
  }
  return ll - 0.5 * lambda_theta * theta.squaredNorm() - 0.5 * lambda_beta * beta.squaredNorm();
}

// ---- ranking metrics -------------------------------------------------------

// Full ranking of all non-excluded items: score descending, index ascending.
inline std::vector<int> full_ranking(const std::vector<double>& scores, const std::set<int>& excluded) {
  std::vector<int> items;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (!excluded.count(i)) items.push_back(i);
  std::stable_sort(items.begin(), items.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return items;
}

struct Metrics {
  double recall, map, ndcg;
};

inline Metrics metrics_at(const std::vector<int>& ranking, const std::set<int>& relevant, int k) {
  const int n = std::min<int>(k, static_cast<int>(relevant.size()));
  int hits = 0;
  double ap = 0.0, dcg = 0.0, idcg = 0.0;
  for (int r = 0; r < k && r < static_cast<int>(ranking.size()); ++r) {
    if (relevant.count(ranking[r])) {
      ++hits;
      ap += static_cast<double>(hits) / (r + 1);
      dcg += 1.0 / std::log2(r + 2.0);
    }
  }
  for (int r = 0; r < n; ++r) idcg += 1.0 / std::log2(r + 2.0);
  return {static_cast<double>(hits) / n, ap / n, dcg / idcg};
}

}  // namespace oracle
