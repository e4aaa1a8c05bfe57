#include "serec/rating_core.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>

#include "parallel.hpp"

namespace serec {

namespace {

constexpr Index kBlockEntries = Index{1} << 22;

double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(mu N(0|s) + 1 - mu) for an unobserved pair.
double unobserved_log_term(double mu, double score, double lambda_y) {
  return log_add_exp(std::log(mu) + gaussian_log_density(0.0, score, lambda_y), std::log1p(-mu));
}

double observed_log_term(double mu, double score, double lambda_y) {
  return std::log(mu) + gaussian_log_density(1.0, score, lambda_y);
}

struct KernelOptions {
  bool clamp = true;
  double* loglik = nullptr;      // accumulates the block's likelihood terms
  bool* zero_observed = nullptr;  // set when an observed pair has mu == 0
  bool* bad_mu = nullptr;         // set when the provider returns mu outside [0, 1]
};

// Posterior (or fixed weights) for one rectangular block.
void posterior_kernel(const InteractionMatrix& y, const FactorModel& m, const ExposureModel& prior, Index u0,
                      Index i0, Eigen::Ref<Matrix> out, const KernelOptions& opt) {
  const Index nr = out.rows();
  const Index nc = out.cols();
  const double lambda_y = m.lambda_y;

  if (auto w = prior.fixed_unobserved_weight()) {
    out.setConstant(*w);
    for (Index c = 0; c < nc; ++c) {
      for (Index u : y.users_of(i0 + c)) {
        if (u >= u0 && u < u0 + nr) out(u - u0, c) = 1.0;
      }
    }
    return;
  }

  Matrix mu(nr, nc);
  prior.prior_block(u0, i0, mu);
  if (!((mu.array() >= 0.0).all() && (mu.array() <= 1.0).all())) {
    if (opt.bad_mu) *opt.bad_mu = true;
    return;
  }
  if (opt.clamp) mu = mu.unaryExpr([](double v) { return clamp_mu(v); });

  out.noalias() = m.theta.middleRows(u0, nr) * m.beta.middleRows(i0, nc).transpose();
  double ll = 0.0;
  for (Index c = 0; c < nc; ++c) {
    for (Index r = 0; r < nr; ++r) {
      const double s = out(r, c);
      if (opt.loglik) ll += unobserved_log_term(mu(r, c), s, lambda_y);
      out(r, c) = e_step_pair(mu(r, c), s, lambda_y);
    }
  }
  if (opt.loglik) {
    // Swap the unobserved term for the observed one on clicked pairs. Scores
    // are recomputed since `out` now holds posteriors.
    for (Index c = 0; c < nc; ++c) {
      const Index i = i0 + c;
      for (Index u : y.users_of(i)) {
        if (u < u0 || u >= u0 + nr) continue;
        const double s = m.theta.row(u).dot(m.beta.row(i));
        const double mu_ui = mu(u - u0, c);
        if (mu_ui <= 0.0 && opt.zero_observed) *opt.zero_observed = true;
        ll += observed_log_term(mu_ui, s, lambda_y) - unobserved_log_term(mu_ui, s, lambda_y);
      }
    }
    *opt.loglik += ll;
  }
  for (Index c = 0; c < nc; ++c) {
    for (Index u : y.users_of(i0 + c)) {
      if (u >= u0 && u < u0 + nr) out(u - u0, c) = 1.0;
    }
  }
}

Index columns_per_block(Index n_rows) {
  return std::max<Index>(1, std::min<Index>(256, kBlockEntries / std::max<Index>(1, n_rows)));
}

// Sweeps all item blocks, optionally storing the posterior and summing the
// likelihood terms. Per-block partial sums are reduced in block order so the
// result does not depend on the thread count.
std::optional<Matrix> sweep(const InteractionMatrix& y, const FactorModel& m, const ExposureModel& prior,
                            bool store, bool clamp, double* loglik) {
  const Index U = y.n_users();
  const Index V = y.n_items();
  const Index step = columns_per_block(U);
  const Index n_blocks = (V + step - 1) / step;

  std::optional<Matrix> P;
  if (store) P.emplace(U, V);
  std::vector<double> partial(static_cast<std::size_t>(n_blocks), 0.0);
  std::atomic<bool> bad_mu{false}, zero_observed{false};

#pragma omp parallel for schedule(dynamic)
  for (Index b = 0; b < n_blocks; ++b) {
    const Index i0 = b * step;
    const Index nc = std::min(step, V - i0);
    Matrix scratch;
    bool bad = false, zero = false;
    KernelOptions opt{clamp, loglik ? &partial[static_cast<std::size_t>(b)] : nullptr, &zero, &bad};
    if (store) {
      posterior_kernel(y, m, prior, 0, i0, P->middleCols(i0, nc), opt);
    } else {
      scratch.resize(U, nc);
      posterior_kernel(y, m, prior, 0, i0, scratch, opt);
    }
    if (bad) bad_mu = true;
    if (zero) zero_observed = true;
  }
  if (bad_mu) throw std::domain_error("exposure provider returned mu outside [0, 1]");
  if (zero_observed && loglik)
    throw std::domain_error("observed click has zero exposure prior; log likelihood is -inf");
  if (loglik) {
    double total = 0.0;
    for (double v : partial) total += v;
    *loglik = total;
  }
  return P;
}

double factor_penalty(const FactorModel& m) {
  return 0.5 * m.lambda_theta * m.theta.squaredNorm() + 0.5 * m.lambda_beta * m.beta.squaredNorm();
}

// Solves, for every entity r in [0, n),
//   (lambda_y sum_j w_rj f_j f_j^T + reg I) x_r = lambda_y sum_{j in pos(r)} w_rj f_j
// where `weights(r0, n)` yields an (n x M) block of w and `other` holds f_j as rows.
template <class WeightBlock, class Positives>
Matrix ridge_rows(Index n, const Matrix& other, double lambda_y, double reg, Index rows_per_block,
                  WeightBlock&& weights, Positives&& positives) {
  const Index K = other.cols();
  Matrix result(n, K);
  for (Index r0 = 0; r0 < n; r0 += rows_per_block) {
    const Index nb = std::min(rows_per_block, n - r0);
    const Matrix W = weights(r0, nb);
#pragma omp parallel
    {
      Matrix scaled(other.rows(), K);
      Matrix gram(K, K);
      Vector rhs(K);
#pragma omp for schedule(dynamic, 8)
      for (Index b = 0; b < nb; ++b) {
        const Index r = r0 + b;
        scaled = other.array().colwise() * W.row(b).transpose().array().sqrt();
        gram.setZero();
        gram.selfadjointView<Eigen::Lower>().rankUpdate(scaled.transpose(), lambda_y);
        gram.diagonal().array() += reg;
        rhs.setZero();
        for (Index j : positives(r)) rhs.noalias() += (lambda_y * W(b, j)) * other.row(j).transpose();
        result.row(r) = gram.selfadjointView<Eigen::Lower>().llt().solve(rhs).transpose();
      }
    }
  }
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (k <= 0) throw std::invalid_argument("k must be positive");
  if (!(lambda_theta > 0 && lambda_beta > 0 && lambda_y > 0))
    throw std::invalid_argument("precisions must be positive");
  if (max_em_iters < 0) throw std::invalid_argument("max_em_iters must be non-negative");
  if (!(convergence_tol > 0)) throw std::invalid_argument("convergence_tol must be positive");
  if (!(init_scale > 0)) throw std::invalid_argument("init_scale must be positive");
  if (dense_budget < 0) throw std::invalid_argument("dense_budget must be non-negative");
}

double gaussian_log_density(double x, double mean, double precision) {
  const double d = x - mean;
  return 0.5 * std::log(precision / (2.0 * std::numbers::pi)) - 0.5 * precision * d * d;
}

double e_step_pair(double mu, double score, double lambda_y) {
  if (mu <= 0.0) return 0.0;
  if (mu >= 1.0) return 1.0;
  const double log_exposed = std::log(mu) + gaussian_log_density(0.0, score, lambda_y);
  const double log_unexposed = std::log1p(-mu);
  return 1.0 / (1.0 + std::exp(log_unexposed - log_exposed));
}

Posterior Posterior::dense(Matrix values) {
  Posterior p;
  p.n_users_ = values.rows();
  p.n_items_ = values.cols();
  p.dense_ = std::move(values);
  return p;
}

Posterior Posterior::streamed(const InteractionMatrix& y, const FactorModel& snapshot, const ExposureModel& prior) {
  Posterior p;
  p.n_users_ = y.n_users();
  p.n_items_ = y.n_items();
  p.y_ = &y;
  p.prior_ = &prior;
  p.snapshot_ = std::make_shared<const FactorModel>(snapshot);
  return p;
}

double Posterior::at(Index u, Index i) const {
  if (dense_) return (*dense_)(u, i);
  Matrix one(1, 1);
  block(u, i, one);
  return one(0, 0);
}

void Posterior::block(Index u0, Index i0, Eigen::Ref<Matrix> out) const {
  if (dense_) {
    out = dense_->block(u0, i0, out.rows(), out.cols());
    return;
  }
  bool bad = false;
  posterior_kernel(*y_, *snapshot_, *prior_, u0, i0, out, KernelOptions{true, nullptr, nullptr, &bad});
  if (bad) throw std::domain_error("exposure provider returned mu outside [0, 1]");
}

Vector Posterior::column_sums() const {
  if (dense_) return dense_->colwise().sum().transpose();
  Vector sums(n_items_);
  const Index step = columns_per_block(n_users_);
  Matrix buf;
  for (Index i0 = 0; i0 < n_items_; i0 += step) {
    const Index nc = std::min(step, n_items_ - i0);
    buf.resize(n_users_, nc);
    block(0, i0, buf);
    sums.segment(i0, nc) = buf.colwise().sum().transpose();
  }
  return sums;
}

Posterior e_step(const InteractionMatrix& y, const FactorModel& model, const ExposureModel& provider,
                 Index dense_budget) {
  if (model.n_users() != y.n_users() || model.n_items() != y.n_items())
    throw std::invalid_argument("e_step: model and interaction shapes differ");
  if (y.n_users() * y.n_items() <= dense_budget)
    return Posterior::dense(*sweep(y, model, provider, true, true, nullptr));
  if (provider.requires_dense_posterior())
    throw std::invalid_argument("exposure model '" + provider.kind() +
                                "' needs a dense posterior; raise dense_budget");
  return Posterior::streamed(y, model, provider);
}

Matrix update_user_factors(const InteractionMatrix& y, const Posterior& p, const FactorModel& model) {
  const Index V = y.n_items();
  const Index rows = std::max<Index>(1, std::min<Index>(y.n_users(), kBlockEntries / std::max<Index>(1, V)));
  return ridge_rows(
      y.n_users(), model.beta, model.lambda_y, model.lambda_theta, rows,
      [&](Index u0, Index nb) {
        Matrix W(nb, V);
        p.block(u0, 0, W);
        return W;
      },
      [&](Index u) { return y.items_of(u); });
}

Matrix update_item_factors(const InteractionMatrix& y, const Posterior& p, const FactorModel& model) {
  const Index U = y.n_users();
  const Index cols = std::max<Index>(1, std::min<Index>(y.n_items(), kBlockEntries / std::max<Index>(1, U)));
  return ridge_rows(
      y.n_items(), model.theta, model.lambda_y, model.lambda_beta, cols,
      [&](Index i0, Index nb) {
        Matrix W(U, nb);
        p.block(0, i0, W);
        return Matrix(W.transpose());
      },
      [&](Index i) { return y.users_of(i); });
}

double log_likelihood(const InteractionMatrix& y, const FactorModel& model, const ExposureModel& provider) {
  if (auto w = provider.fixed_unobserved_weight()) return weighted_objective(y, model, *w);
  double ll = 0.0;
  sweep(y, model, provider, false, false, &ll);
  return ll - factor_penalty(model);
}

double weighted_objective(const InteractionMatrix& y, const FactorModel& model, double unobserved_weight) {
  const Index U = y.n_users();
  const Index V = y.n_items();
  const Index step = columns_per_block(U);
  const Index n_blocks = (V + step - 1) / step;
  std::vector<double> partial(static_cast<std::size_t>(n_blocks), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (Index b = 0; b < n_blocks; ++b) {
    const Index i0 = b * step;
    const Index nc = std::min(step, V - i0);
    const Matrix s = model.theta * model.beta.middleRows(i0, nc).transpose();
    double acc = unobserved_weight * s.squaredNorm();
    for (Index c = 0; c < nc; ++c) {
      for (Index u : y.users_of(i0 + c)) {
        const double v = s(u, c);
        acc += (1.0 - v) * (1.0 - v) - unobserved_weight * v * v;
      }
    }
    partial[static_cast<std::size_t>(b)] = acc;
  }
  double total = 0.0;
  for (double v : partial) total += v;
  return -0.5 * model.lambda_y * total - factor_penalty(model);
}

namespace {

// Objective at the current state, plus the posterior for the next M-step when
// requested. A dense posterior is produced by the same sweep.
double objective(const InteractionMatrix& y, const FactorModel& model, const ExposureModel& provider,
                 Index dense_budget, std::optional<Posterior>* posterior) {
  if (auto w = provider.fixed_unobserved_weight()) {
    if (posterior) posterior->emplace(e_step(y, model, provider, dense_budget));
    return weighted_objective(y, model, *w);
  }
  double ll = 0.0;
  const bool dense = posterior && y.n_users() * y.n_items() <= dense_budget;
  auto P = sweep(y, model, provider, dense, true, &ll);
  if (dense) posterior->emplace(Posterior::dense(std::move(*P)));
  else if (posterior) posterior->emplace(e_step(y, model, provider, dense_budget));
  return ll - factor_penalty(model);
}

}  // namespace

FitResult fit(const InteractionMatrix& train, ExposureModel& provider, const TrainConfig& cfg) {
  cfg.validate();
  set_thread_count(cfg.threads);
  const Index U = train.n_users();
  const Index V = train.n_items();
  if (provider.requires_dense_posterior() && U * V > cfg.dense_budget)
    throw std::invalid_argument("exposure model '" + provider.kind() + "' needs a dense posterior; " +
                                std::to_string(U * V) + " entries exceed dense_budget");

  FitResult result;
  FactorModel& m = result.model;
  m.lambda_theta = cfg.lambda_theta;
  m.lambda_beta = cfg.lambda_beta;
  m.lambda_y = cfg.lambda_y;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.init_scale);
  m.theta.resize(U, cfg.k);
  m.beta.resize(V, cfg.k);
  for (Index r = 0; r < U; ++r)
    for (Index c = 0; c < cfg.k; ++c) m.theta(r, c) = noise(rng);
  for (Index r = 0; r < V; ++r)
    for (Index c = 0; c < cfg.k; ++c) m.beta(r, c) = noise(rng);

  double previous = 0.0;
  for (int it = 0; it < cfg.max_em_iters; ++it) {
    std::optional<Posterior> p;
    const double current = objective(train, m, provider, cfg.dense_budget, &p);
    if (!std::isfinite(current))
      throw TrainingError("non-finite objective at EM iteration " + std::to_string(it));
    if (it > 0) {
      result.trace.push_back(current);
      if (std::abs(current - previous) <= cfg.convergence_tol * std::abs(previous)) {
        result.converged = true;
        return result;
      }
    }
    previous = current;

    m.theta = update_user_factors(train, *p, m);
    if (!m.theta.allFinite())
      throw TrainingError("non-finite user factors at EM iteration " + std::to_string(it + 1));
    m.beta = update_item_factors(train, *p, m);
    if (!m.beta.allFinite())
      throw TrainingError("non-finite item factors at EM iteration " + std::to_string(it + 1));
    provider.update(train, *p, m, it);
    ++result.iterations;
  }
  if (result.iterations > 0) {
    const double last = objective(train, m, provider, cfg.dense_budget, nullptr);
    if (!std::isfinite(last))
      throw TrainingError("non-finite objective after EM iteration " + std::to_string(result.iterations));
    result.trace.push_back(last);
  }
  return result;
}

Vector predict_scores(const FactorModel& model, Index user) {
  if (user < 0 || user >= model.n_users()) throw std::out_of_range("predict_scores: user out of range");
  return model.beta * model.theta.row(user).transpose();
}

void set_thread_count(int threads) {
  Eigen::setNbThreads(1);
#ifdef _OPENMP
  omp_set_num_threads(threads > 0 ? threads : omp_get_num_procs());
#else
  (void)threads;
#endif
}

}  // namespace serec
