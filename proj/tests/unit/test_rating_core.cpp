#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "serec/exposure_popularity.hpp"
#include "serec/rating_core.hpp"
#include "serec/synthetic.hpp"
#include "stub_provider.hpp"

using namespace serec;

namespace {

FactorModel make_model(Matrix theta, Matrix beta, double lt = 0.1, double lb = 0.1, double ly = 1.0) {
  FactorModel m;
  m.theta = std::move(theta);
  m.beta = std::move(beta);
  m.lambda_theta = lt;
  m.lambda_beta = lb;
  m.lambda_y = ly;
  return m;
}

Matrix full(const Posterior& p) {
  Matrix out(p.n_users(), p.n_items());
  p.block(0, 0, out);
  return out;
}

}  // namespace

// ---- e_step_pair -----------------------------------------------------------

TEST(EStepPair, Boundaries) {
  EXPECT_EQ(e_step_pair(0.0, 1.3, 2.0), 0.0);
  EXPECT_EQ(e_step_pair(1.0, 1.3, 2.0), 1.0);
}

TEST(EStepPair, WorkedValue) {
  const double n = oracle::normal_pdf(0.0, 2.0, 1.0);
  EXPECT_NEAR(n, 0.053991, 1e-6);
  const double expect = 0.5 * n / (0.5 * n + 0.5);
  EXPECT_NEAR(e_step_pair(0.5, 2.0, 1.0), expect, 1e-14);
  EXPECT_NEAR(e_step_pair(0.5, 2.0, 1.0), 0.05123, 5e-6);
}

TEST(EStepPair, MatchesEnumeration) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mu(0.0, 1.0), score(-4.0, 4.0), lam(0.01, 10.0);
  for (int t = 0; t < 1000; ++t) {
    const double m = mu(rng), s = score(rng), l = lam(rng);
    EXPECT_NEAR(e_step_pair(m, s, l), brute_force_posterior(m, s, l), 1e-12);
  }
}

TEST(EStepPair, MonotoneInMuAndPeakedAtZeroScore) {
  for (double s : {-2.0, 0.0, 0.7, 3.0}) {
    double prev = -1.0;
    for (int k = 0; k <= 20; ++k) {
      const double p = e_step_pair(k / 20.0, s, 1.5);
      EXPECT_GE(p, prev);
      prev = p;
    }
  }
  for (double mu : {0.1, 0.5, 0.9}) {
    double prev = 2.0;
    for (int k = 0; k <= 20; ++k) {
      const double p = e_step_pair(mu, 0.25 * k, 1.0);
      EXPECT_LE(p, prev);
      EXPECT_DOUBLE_EQ(p, e_step_pair(mu, -0.25 * k, 1.0));
      prev = p;
    }
  }
}

TEST(GaussianLogDensity, StandardNormalAtMean) {
  EXPECT_NEAR(gaussian_log_density(1.0, 1.0, 1.0), -0.91893853320467, 1e-12);
  EXPECT_NEAR(gaussian_log_density(0.3, -1.0, 2.5), std::log(oracle::normal_pdf(0.3, -1.0, 2.5)), 1e-12);
}

// ---- e_step ----------------------------------------------------------------

TEST(EStep, AllObservedIsAllOnes) {
  std::vector<Pair> e;
  for (Index u = 0; u < 3; ++u)
    for (Index i = 0; i < 4; ++i) e.emplace_back(u, i);
  const InteractionMatrix y(3, 4, e);
  std::mt19937_64 rng(1);
  const auto m = make_model(random_matrix(3, 2, rng), random_matrix(4, 2, rng));
  MatrixPrior prior(Matrix::Constant(3, 4, 0.3));
  EXPECT_TRUE(full(e_step(y, m, prior)).isOnes());
}

TEST(EStep, ZeroFactorsHalfPrior) {
  const InteractionMatrix y(4, 5, {{0, 0}, {2, 3}});
  const auto m = make_model(Matrix::Zero(4, 3), Matrix::Zero(5, 3));
  MatrixPrior prior(Matrix::Constant(4, 5, 0.5));
  const Matrix p = full(e_step(y, m, prior));
  const double n0 = oracle::normal_pdf(0.0, 0.0, 1.0);
  for (Index u = 0; u < 4; ++u)
    for (Index i = 0; i < 5; ++i) {
      if (y.contains(u, i)) EXPECT_EQ(p(u, i), 1.0);
      else {
        EXPECT_NEAR(p(u, i), 0.5 * n0 / (0.5 * n0 + 0.5), 1e-14);
        EXPECT_NEAR(p(u, i), 0.2852, 5e-5);
      }
    }
}

TEST(EStep, TwoByTwoMatchesEnumeratedBayes) {
  const InteractionMatrix y(2, 2, {{0, 1}});
  Matrix theta(2, 1), beta(2, 1);
  theta << 0.8, -1.2;
  beta << 0.5, 1.7;
  const auto m = make_model(theta, beta, 0.1, 0.1, 2.0);
  Matrix mu(2, 2);
  mu << 0.3, 0.6, 0.9, 0.05;
  MatrixPrior prior(mu);
  const Matrix p = full(e_step(y, m, prior));
  EXPECT_EQ(p(0, 1), 1.0);
  for (auto [u, i] : {std::pair{0, 0}, {1, 0}, {1, 1}})
    EXPECT_NEAR(p(u, i), brute_force_posterior(mu(u, i), theta(u, 0) * beta(i, 0), 2.0), 1e-12);
}

TEST(EStep, RejectsMuOutsideUnitInterval) {
  const InteractionMatrix y(2, 2, {});
  const auto m = make_model(Matrix::Zero(2, 1), Matrix::Zero(2, 1));
  MatrixPrior high(Matrix::Constant(2, 2, 1.2));
  EXPECT_THROW(e_step(y, m, high), std::domain_error);
  MatrixPrior nan(Matrix::Constant(2, 2, std::nan("")));
  EXPECT_THROW(e_step(y, m, nan), std::domain_error);
}

TEST(EStep, StreamedMatchesDenseAndStaysInRange) {
  std::mt19937_64 rng(3);
  const auto y = random_clicks(37, 41, 0.15, rng);
  const auto m = make_model(random_matrix(37, 3, rng), random_matrix(41, 3, rng));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  MatrixPrior prior(Matrix::NullaryExpr(37, 41, [&] { return unif(rng); }));
  const Posterior dense = e_step(y, m, prior);
  const Posterior streamed = e_step(y, m, prior, 0);
  ASSERT_TRUE(dense.is_dense());
  ASSERT_FALSE(streamed.is_dense());
  const Matrix a = full(dense), b = full(streamed);
  EXPECT_EQ(a, b);
  EXPECT_TRUE((a.array() >= 0.0).all() && (a.array() <= 1.0).all());
  for (const auto& [u, i] : y.entries()) EXPECT_EQ(a(u, i), 1.0);
  EXPECT_NEAR((dense.column_sums() - streamed.column_sums()).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_EQ(dense.at(5, 7), b(5, 7));
}

// ---- factor updates --------------------------------------------------------

TEST(UpdateFactors, ScalarWorkedExample) {
  const InteractionMatrix y(1, 1, {{0, 0}});
  const auto m = make_model(Matrix::Zero(1, 1), Matrix::Constant(1, 1, 2.0), 0.1, 0.1, 1.0);
  const Posterior p = Posterior::dense(Matrix::Ones(1, 1));
  EXPECT_NEAR(update_user_factors(y, p, m)(0, 0), 2.0 / 4.1, 1e-14);

  const auto mirror = make_model(Matrix::Constant(1, 1, 2.0), Matrix::Zero(1, 1), 0.1, 0.1, 1.0);
  EXPECT_NEAR(update_item_factors(y, p, mirror)(0, 0), 2.0 / 4.1, 1e-14);
  EXPECT_NEAR(2.0 / 4.1, 0.48780, 5e-6);
}

TEST(UpdateFactors, ZeroPosteriorGivesZeroRows) {
  const InteractionMatrix y(3, 3, {{0, 0}, {1, 1}});
  std::mt19937_64 rng(4);
  const auto m = make_model(random_matrix(3, 2, rng), random_matrix(3, 2, rng));
  Matrix p = Matrix::Constant(3, 3, 0.4);
  p(0, 0) = p(1, 1) = 1.0;
  p.row(2).setZero();  // user 2 clicks nothing
  p.col(2).setZero();  // item 2 clicked by nobody
  const Posterior post = Posterior::dense(p);
  EXPECT_TRUE(update_user_factors(y, post, m).row(2).isZero(0.0));
  EXPECT_TRUE(update_item_factors(y, post, m).row(2).isZero(0.0));
}

TEST(UpdateFactors, MatchNormalEquationsOracle) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(1, 10), kdim(1, 3);
  std::uniform_real_distribution<double> unif(0.0, 1.0), lam(0.05, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Index U = dim(rng), V = dim(rng), K = kdim(rng);
    const auto y = random_clicks(U, V, 0.3, rng);
    const auto m = make_model(random_matrix(U, K, rng), random_matrix(V, K, rng), lam(rng), lam(rng), lam(rng));
    Matrix p = Matrix::NullaryExpr(U, V, [&] { return unif(rng); });
    const Matrix Y = dense_clicks(y);
    p = (Y.array() > 0.5).select(1.0, p);
    const Posterior post = Posterior::dense(p);

    const Matrix theta = update_user_factors(y, post, m);
    EXPECT_LT((theta - oracle::solve_users(Y, p, m.beta, m.lambda_y, m.lambda_theta)).cwiseAbs().maxCoeff(), 1e-10);
    const Matrix beta = update_item_factors(y, post, m);
    EXPECT_LT((beta - oracle::solve_items(Y, p, m.theta, m.lambda_y, m.lambda_beta)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(UpdateFactors, PerturbationDoesNotImproveObjective) {
  std::mt19937_64 rng(12);
  const Index U = 8, V = 9, K = 3;
  const auto y = random_clicks(U, V, 0.3, rng);
  auto m = make_model(random_matrix(U, K, rng), random_matrix(V, K, rng), 0.3, 0.2, 1.5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix p = Matrix::NullaryExpr(U, V, [&] { return unif(rng); });
  const Matrix Y = dense_clicks(y);
  p = (Y.array() > 0.5).select(1.0, p);
  m.theta = update_user_factors(y, Posterior::dense(p), m);

  auto user_objective = [&](const Eigen::RowVectorXd& t, Index u) {
    double f = 0.5 * m.lambda_theta * t.squaredNorm();
    for (Index i = 0; i < V; ++i) {
      const double r = Y(u, i) - t.dot(m.beta.row(i));
      f += 0.5 * m.lambda_y * p(u, i) * r * r;
    }
    return f;
  };
  const double delta = 1e-3;
  for (Index u = 0; u < U; ++u) {
    const double base = user_objective(m.theta.row(u), u);
    for (Index c = 0; c < K; ++c)
      for (double sign : {-1.0, 1.0}) {
        Eigen::RowVectorXd t = m.theta.row(u);
        t(c) += sign * delta;
        EXPECT_GE(user_objective(t, u), base);
      }
  }
}

// ---- log likelihood --------------------------------------------------------

TEST(LogLikelihood, EmptyClicksZeroFactorsZeroMu) {
  const InteractionMatrix y(3, 4, {});
  const auto m = make_model(Matrix::Zero(3, 2), Matrix::Zero(4, 2));
  MatrixPrior prior(Matrix::Zero(3, 4));
  EXPECT_EQ(log_likelihood(y, m, prior), 0.0);
}

TEST(LogLikelihood, SingleObservedPair) {
  const InteractionMatrix y(1, 1, {{0, 0}});
  const auto m = make_model(Matrix::Ones(1, 1), Matrix::Ones(1, 1), 0.2, 0.4, 1.0);
  MatrixPrior prior(Matrix::Ones(1, 1));
  const double penalties = 0.5 * 0.2 + 0.5 * 0.4;
  EXPECT_NEAR(log_likelihood(y, m, prior) + penalties, -0.91894, 5e-6);
  EXPECT_NEAR(log_likelihood(y, m, prior) + penalties, -0.5 * std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(LogLikelihood, ToyMatchesSummationOracle) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (int trial = 0; trial < 10; ++trial) {
    const auto y = random_clicks(3, 3, 0.4, rng);
    const auto m = make_model(random_matrix(3, 2, rng), random_matrix(3, 2, rng), 0.3, 0.7, 1.3);
    const Matrix mu = Matrix::NullaryExpr(3, 3, [&] { return unif(rng); });
    MatrixPrior prior(mu);
    const double expect =
        oracle::log_likelihood(dense_clicks(y), mu, m.theta, m.beta, m.lambda_y, m.lambda_theta, m.lambda_beta);
    EXPECT_NEAR(log_likelihood(y, m, prior), expect, 1e-12);
  }
}

TEST(LogLikelihood, ObservedPairWithZeroMuIsError) {
  const InteractionMatrix y(2, 2, {{1, 0}});
  const auto m = make_model(Matrix::Zero(2, 1), Matrix::Zero(2, 1));
  MatrixPrior prior(Matrix::Zero(2, 2));
  EXPECT_THROW(log_likelihood(y, m, prior), std::domain_error);
}

TEST(WeightedObjective, MatchesDirectSum) {
  std::mt19937_64 rng(22);
  const auto y = random_clicks(6, 7, 0.3, rng);
  const auto m = make_model(random_matrix(6, 2, rng), random_matrix(7, 2, rng), 0.2, 0.3, 1.7);
  const Matrix Y = dense_clicks(y);
  double expect = 0.0;
  for (Index u = 0; u < 6; ++u)
    for (Index i = 0; i < 7; ++i) {
      const double w = Y(u, i) > 0 ? 1.0 : 0.4;
      const double r = Y(u, i) - m.theta.row(u).dot(m.beta.row(i));
      expect -= 0.5 * m.lambda_y * w * r * r;
    }
  expect -= 0.5 * 0.2 * m.theta.squaredNorm() + 0.5 * 0.3 * m.beta.squaredNorm();
  EXPECT_NEAR(weighted_objective(y, m, 0.4), expect, 1e-12);
}

// ---- fit -------------------------------------------------------------------

TEST(Fit, ZeroIterationsReturnsInitialisation) {
  std::mt19937_64 rng(31);
  const auto y = random_clicks(10, 12, 0.2, rng);
  TrainConfig cfg;
  cfg.k = 3;
  cfg.max_em_iters = 0;
  cfg.seed = 9;
  auto prior = PopularityExposure::from_popularity(y);
  const FitResult a = fit(y, prior, cfg);
  EXPECT_EQ(a.iterations, 0);
  EXPECT_TRUE(a.trace.empty());
  EXPECT_EQ(a.model.theta.rows(), 10);
  EXPECT_EQ(a.model.beta.cols(), 3);
  EXPECT_LT(a.model.theta.cwiseAbs().maxCoeff(), 10 * cfg.init_scale);
  EXPECT_EQ(prior.mu_items(), PopularityExposure::from_popularity(y).mu_items());

  cfg.max_em_iters = 3;
  auto other = PopularityExposure::from_popularity(y);
  EXPECT_NE(fit(y, other, cfg).model.theta, a.model.theta);
}

TEST(Fit, WmfModeMatchesWeightedAlsOracle) {
  std::mt19937_64 rng(32);
  const auto y = random_clicks(12, 15, 0.25, rng);
  TrainConfig cfg;
  cfg.k = 3;
  cfg.lambda_theta = 0.5;
  cfg.lambda_beta = 0.3;
  cfg.lambda_y = 2.0;
  cfg.convergence_tol = 1e-300;
  cfg.seed = 5;
  cfg.max_em_iters = 0;
  FixedExposure wmf(0.4);
  FactorModel start = fit(y, wmf, cfg).model;

  cfg.max_em_iters = 8;
  const FitResult r = fit(y, wmf, cfg);
  ASSERT_EQ(r.iterations, 8);
  Matrix theta = start.theta, beta = start.beta;
  oracle::wals(dense_clicks(y), 0.4, theta, beta, cfg.lambda_y, cfg.lambda_theta, cfg.lambda_beta, 8);
  EXPECT_LT((r.model.theta - theta).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((r.model.beta - beta).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Fit, TraceNonDecreasingWithFixedPrior) {
  SyntheticSpec spec;
  spec.n_users = 60;
  spec.n_items = 50;
  spec.seed = 2;
  const auto data = generate(spec);
  MatrixPrior prior(data.mu.unaryExpr([](double v) { return clamp_mu(v); }));
  TrainConfig cfg;
  cfg.k = 4;
  cfg.max_em_iters = 30;
  cfg.convergence_tol = 1e-12;
  const FitResult r = fit(data.clicks, prior, cfg);
  ASSERT_GE(r.trace.size(), 2u);
  for (std::size_t t = 1; t < r.trace.size(); ++t)
    EXPECT_GE(r.trace[t], r.trace[t - 1] - 1e-6 * std::abs(r.trace[t - 1])) << "iteration " << t;
}

TEST(Fit, WmfTraceNonDecreasing) {
  std::mt19937_64 rng(33);
  const auto y = random_clicks(20, 20, 0.2, rng);
  FixedExposure wmf(0.4);
  TrainConfig cfg;
  cfg.k = 4;
  cfg.convergence_tol = 1e-12;
  const FitResult r = fit(y, wmf, cfg);
  for (std::size_t t = 1; t < r.trace.size(); ++t)
    EXPECT_GE(r.trace[t], r.trace[t - 1] - 1e-6 * std::abs(r.trace[t - 1]));
}

TEST(Fit, NonFiniteAbortNamesIteration) {
  std::mt19937_64 rng(34);
  const auto y = random_clicks(5, 5, 0.4, rng);
  auto prior = PopularityExposure::from_popularity(y);
  TrainConfig cfg;
  cfg.k = 2;
  cfg.lambda_y = 1e308;
  cfg.init_scale = 1e10;
  try {
    fit(y, prior, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos) << e.what();
  }
}

TEST(Fit, ConfigValidated) {
  const InteractionMatrix y(2, 2, {{0, 0}});
  FixedExposure wmf;
  TrainConfig cfg;
  cfg.k = 0;
  EXPECT_THROW(fit(y, wmf, cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.convergence_tol = 0.0;
  EXPECT_THROW(fit(y, wmf, cfg), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lambda_y = -1.0;
  EXPECT_THROW(fit(y, wmf, cfg), std::invalid_argument);
}

TEST(Fit, SingleThreadBitReproducibleAndMultiThreadAgrees) {
  std::mt19937_64 rng(35);
  const auto y = random_clicks(300, 700, 0.02, rng);
  TrainConfig cfg;
  cfg.k = 5;
  cfg.max_em_iters = 1;
  cfg.threads = 1;
  auto p1 = PopularityExposure::from_popularity(y);
  auto p2 = PopularityExposure::from_popularity(y);
  const FitResult a = fit(y, p1, cfg);
  const FitResult b = fit(y, p2, cfg);
  EXPECT_EQ(a.model.theta, b.model.theta);
  EXPECT_EQ(a.model.beta, b.model.beta);
  EXPECT_EQ(a.trace, b.trace);

  cfg.threads = 4;
  auto p3 = PopularityExposure::from_popularity(y);
  const FitResult c = fit(y, p3, cfg);
  auto rel = [](const Matrix& x, const Matrix& z) { return (x - z).norm() / z.norm(); };
  EXPECT_LT(rel(c.model.theta, a.model.theta), 1e-8);
  EXPECT_LT(rel(c.model.beta, a.model.beta), 1e-8);
  set_thread_count(0);
}

TEST(Fit, StreamedPosteriorMatchesDense) {
  std::mt19937_64 rng(36);
  const auto y = random_clicks(40, 90, 0.08, rng);
  TrainConfig cfg;
  cfg.k = 3;
  cfg.max_em_iters = 5;
  cfg.convergence_tol = 1e-300;
  auto a = PopularityExposure::from_popularity(y);
  auto b = PopularityExposure::from_popularity(y);
  const FitResult dense = fit(y, a, cfg);
  cfg.dense_budget = 0;
  const FitResult streamed = fit(y, b, cfg);
  EXPECT_LT((dense.model.theta - streamed.model.theta).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((a.mu_items() - b.mu_items()).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_EQ(dense.trace.size(), streamed.trace.size());
  for (std::size_t t = 0; t < dense.trace.size(); ++t)
    EXPECT_NEAR(dense.trace[t], streamed.trace[t], 1e-9 * std::abs(dense.trace[t]));
}

// ---- predict_scores --------------------------------------------------------

TEST(PredictScores, Examples) {
  std::mt19937_64 rng(41);
  auto m = make_model(Matrix::Zero(2, 3), random_matrix(4, 3, rng));
  EXPECT_TRUE(predict_scores(m, 1).isZero(0.0));

  Matrix theta(1, 1), beta(2, 1);
  theta << 2.0;
  beta << 1.0, 3.0;
  const Vector s = predict_scores(make_model(theta, beta), 0);
  EXPECT_EQ(s(0), 2.0);
  EXPECT_EQ(s(1), 6.0);

  const auto r = make_model(random_matrix(5, 4, rng), random_matrix(7, 4, rng));
  for (Index u = 0; u < 5; ++u) {
    const Vector got = predict_scores(r, u);
    for (Index i = 0; i < 7; ++i) {
      double acc = 0.0;
      for (Index c = 0; c < 4; ++c) acc += r.theta(u, c) * r.beta(i, c);
      EXPECT_NEAR(got(i), acc, 1e-12);
    }
  }
  EXPECT_THROW(predict_scores(r, 5), std::out_of_range);
}
