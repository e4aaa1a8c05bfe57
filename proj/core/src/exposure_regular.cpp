#include "serec/exposure_regular.hpp"

#include <algorithm>
#include <random>

#include "tsv.hpp"

namespace serec {

void RegularHyper::validate() const {
  if (k_sr <= 0) throw std::invalid_argument("k_sr must be positive");
  if (lambda_sr < 0 || lambda_x < 0 || lambda_t < 0 || lambda_b < 0 || lambda_gamma < 0)
    throw std::invalid_argument("regularisation weights must be non-negative");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (n_sgd_epochs < 0) throw std::invalid_argument("n_sgd_epochs must be non-negative");
  if (refit_interval <= 0) throw std::invalid_argument("refit_interval must be positive");
}

double observed_target(Index item_clicks, Index n_users) {
  return clamp_mu(static_cast<double>(item_clicks) / static_cast<double>(n_users));
}

std::vector<ExposureTarget> build_targets(const InteractionMatrix& y, const Posterior& p, Index n_negatives,
                                          std::uint64_t seed) {
  std::vector<ExposureTarget> out;
  out.reserve(static_cast<std::size_t>(y.nnz() + n_negatives));
  for (const auto& [u, i] : y.entries()) out.push_back({u, i, observed_target(y.item_count(i), y.n_users())});

  const Index U = y.n_users();
  const Index V = y.n_items();
  if (U * V == y.nnz() || n_negatives <= 0) return out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick_user(0, U - 1), pick_item(0, V - 1);
  for (Index n = 0; n < n_negatives;) {
    const Index u = pick_user(rng);
    const Index i = pick_item(rng);
    if (y.contains(u, i)) continue;
    out.push_back({u, i, p.at(u, i)});
    ++n;
  }
  return out;
}

double triplet_loss(const RegularState& s, const Triplet& tr, const RegularHyper& h) {
  const auto x = s.x.row(tr.user);
  const auto t = s.t.row(tr.item);
  const auto b = s.b.row(tr.trustee);
  const double g = s.gamma[tr.item];
  const double r = x.dot(t) + g - tr.target;
  const double q = x.dot(b) - tr.trust;
  return r * r + h.lambda_sr * q * q + h.lambda_x * x.squaredNorm() + h.lambda_t * t.squaredNorm() +
         h.lambda_b * b.squaredNorm() + h.lambda_gamma * g * g;
}

HalfGradients triplet_half_gradients(const RegularState& s, const Triplet& tr, const RegularHyper& h) {
  const Vector x = s.x.row(tr.user).transpose();
  const Vector t = s.t.row(tr.item).transpose();
  const Vector b = s.b.row(tr.trustee).transpose();
  const double g = s.gamma[tr.item];
  const double r = x.dot(t) + g - tr.target;
  const double q = x.dot(b) - tr.trust;
  HalfGradients grad;
  grad.t = r * x + h.lambda_t * t;
  grad.x = r * t + h.lambda_sr * q * b + h.lambda_x * x;
  grad.b = h.lambda_sr * q * x + h.lambda_b * b;
  grad.gamma = r + h.lambda_gamma * g;
  return grad;
}

void sgd_triplet_step(RegularState& s, const Triplet& tr, const RegularHyper& h, double lr) {
  const HalfGradients g = triplet_half_gradients(s, tr, h);
  if (!(g.t.allFinite() && g.x.allFinite() && g.b.allFinite() && std::isfinite(g.gamma)))
    throw TrainingError("non-finite exposure gradient at triplet (item " + std::to_string(tr.item) + ", user " +
                        std::to_string(tr.user) + ", trustee " + std::to_string(tr.trustee) + ")");
  s.t.row(tr.item) -= lr * g.t.transpose();
  s.x.row(tr.user) -= lr * g.x.transpose();
  s.b.row(tr.trustee) -= lr * g.b.transpose();
  s.gamma[tr.item] -= lr * g.gamma;
}

double sampled_objective(const RegularState& s, const std::vector<Triplet>& triplets, const RegularHyper& h) {
  double total = 0.0;
  for (const auto& tr : triplets) total += triplet_loss(s, tr, h);
  return total;
}

std::vector<Triplet> attach_trustees(const std::vector<ExposureTarget>& targets, const SocialGraph& social,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index U = social.n_users();
  std::uniform_int_distribution<Index> pick_user(0, std::max<Index>(0, U - 1));
  std::vector<Triplet> out;
  out.reserve(targets.size());
  for (const auto& tgt : targets) {
    auto friends = social.friends(tgt.user);
    if (!friends.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, friends.size() - 1);
      out.push_back({tgt.item, tgt.user, friends[pick(rng)], tgt.target, 1.0});
      continue;
    }
    Index k = tgt.user;
    if (U > 1) {
      do k = pick_user(rng);
      while (k == tgt.user);
    }
    out.push_back({tgt.item, tgt.user, k, tgt.target, 0.0});
  }
  return out;
}

SgdReport fit_exposure(RegularState& state, const InteractionMatrix& y, const Posterior& p,
                       const SocialGraph& social, const RegularHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  if (social.n_users() != y.n_users()) throw std::invalid_argument("fit_exposure: social graph size mismatch");
  SgdReport report;
  if (hyper.n_sgd_epochs == 0) {
    report.initial_objective = report.final_objective =
        sampled_objective(state, attach_trustees(build_targets(y, p, y.nnz(), seed), social, seed + 1), hyper);
    return report;
  }

  // All targets are read before the first step: a streamed posterior
  // evaluates through this model's own prior.
  std::vector<std::vector<Triplet>> epochs;
  epochs.reserve(static_cast<std::size_t>(hyper.n_sgd_epochs));
  for (int e = 0; e < hyper.n_sgd_epochs; ++e) {
    const std::uint64_t epoch_seed = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(e + 1);
    epochs.push_back(attach_trustees(build_targets(y, p, y.nnz(), epoch_seed), social, epoch_seed + 1));
  }
  const std::vector<Triplet>& probe = epochs.front();

  report.initial_objective = sampled_objective(state, probe, hyper);
  std::mt19937_64 rng(seed);
  for (int e = 0; e < hyper.n_sgd_epochs; ++e) {
    auto& triplets = epochs[static_cast<std::size_t>(e)];
    std::shuffle(triplets.begin(), triplets.end(), rng);
    for (const auto& tr : triplets) sgd_triplet_step(state, tr, hyper, hyper.learning_rate);
    const double obj = sampled_objective(state, probe, hyper);
    if (!std::isfinite(obj) || obj > 10.0 * report.initial_objective)
      throw TrainingError("exposure SGD diverged at epoch " + std::to_string(e + 1) +
                          "; try a smaller learning_rate");
    report.final_objective = obj;
    ++report.epochs;
  }
  return report;
}

double regular_mu(const RegularState& state, Index user, Index item) {
  return clamp_mu(state.x.row(user).dot(state.t.row(item)) + state.gamma[item]);
}

namespace {

RegularState init_state(const InteractionMatrix& train, const RegularHyper& h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, h.init_scale);
  auto draw = [&](Index rows) {
    Matrix m(rows, h.k_sr);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < h.k_sr; ++c) m(r, c) = noise(rng);
    return m;
  };
  RegularState s;
  s.x = draw(train.n_users());
  s.t = draw(train.n_items());
  s.b = draw(train.n_users());
  s.gamma.resize(train.n_items());
  const double U = static_cast<double>(std::max<Index>(1, train.n_users()));
  for (Index i = 0; i < train.n_items(); ++i) s.gamma[i] = static_cast<double>(train.item_count(i)) / U;
  return s;
}

}  // namespace

RegularExposure::RegularExposure(const InteractionMatrix& train, SocialGraph social, RegularHyper hyper,
                                 std::uint64_t seed)
    : RegularExposure(init_state(train, hyper, seed), std::move(social), hyper, seed) {}

RegularExposure::RegularExposure(RegularState state, SocialGraph social, RegularHyper hyper, std::uint64_t seed)
    : state_(std::move(state)), social_(std::move(social)), hyper_(hyper), seed_(seed) {
  hyper_.validate();
  if (state_.x.rows() != social_.n_users() || state_.b.rows() != social_.n_users())
    throw std::invalid_argument("exposure factors and social graph disagree on the user count");
}

RegularExposure RegularExposure::load(const std::filesystem::path& dir, SocialGraph social, RegularHyper hyper,
                                      std::uint64_t seed) {
  RegularState s;
  s.x = tsv::read_matrix(dir / "X.tsv");
  s.t = tsv::read_matrix(dir / "T.tsv");
  s.b = tsv::read_matrix(dir / "B.tsv");
  s.gamma = tsv::read_vector(dir / "gamma.tsv");
  hyper.k_sr = s.x.cols();
  return RegularExposure(std::move(s), std::move(social), hyper, seed);
}

void RegularExposure::prior_block(Index u0, Index i0, Eigen::Ref<Matrix> out) const {
  out.noalias() = state_.x.middleRows(u0, out.rows()) * state_.t.middleRows(i0, out.cols()).transpose();
  out.rowwise() += state_.gamma.segment(i0, out.cols()).transpose();
  out = out.unaryExpr([](double v) { return clamp_mu(v); });
}

bool RegularExposure::should_refit(int em_iter) const {
  switch (hyper_.refit) {
    case RefitSchedule::once: return em_iter == 0;
    case RefitSchedule::every: return true;
    case RefitSchedule::every_n: return em_iter % hyper_.refit_interval == 0;
  }
  return false;
}

void RegularExposure::update(const InteractionMatrix& y, const Posterior& p, const FactorModel&, int em_iter) {
  if (!should_refit(em_iter)) return;
  reports_.push_back(fit_exposure(state_, y, p, social_, hyper_, seed_ + static_cast<std::uint64_t>(em_iter)));
}

void RegularExposure::save(const std::filesystem::path& dir) const {
  tsv::write_matrix(dir / "X.tsv", state_.x);
  tsv::write_matrix(dir / "T.tsv", state_.t);
  tsv::write_matrix(dir / "B.tsv", state_.b);
  tsv::write_vector(dir / "gamma.tsv", state_.gamma);
}

}  // namespace serec
