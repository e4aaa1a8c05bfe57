#include "serec/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tsv.hpp"

namespace serec {

namespace fs = std::filesystem;
using nlohmann::json;

ModelKind parse_model_kind(const std::string& name) {
  if (name == "wmf") return ModelKind::wmf;
  if (name == "expomf") return ModelKind::expomf;
  if (name == "serec-regular") return ModelKind::serec_regular;
  if (name == "serec-boost") return ModelKind::serec_boost;
  throw UsageError("unknown model kind '" + name + "' (expected wmf, expomf, serec-regular, serec-boost)");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::wmf: return "wmf";
    case ModelKind::expomf: return "expomf";
    case ModelKind::serec_regular: return "serec-regular";
    case ModelKind::serec_boost: return "serec-boost";
  }
  return "?";
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "split_dir", "social", "output", "model", "k", "lambda_theta", "lambda_beta", "lambda_y", "max_em_iters",
      "convergence_tol", "seed", "init_scale", "dense_budget", "threads", "deterministic", "wmf_alpha", "alpha1",
      "alpha2", "s_coeff", "k_sr", "lambda_sr", "lambda_x", "lambda_t", "lambda_b", "lambda_gamma",
      "learning_rate", "n_sgd_epochs", "refit", "cutoffs", "eval_target", "repeats"};
  return keys;
}

json config_to_json(const RunConfig& c) {
  json refit;
  switch (c.regular.refit) {
    case RefitSchedule::once: refit = "once"; break;
    case RefitSchedule::every: refit = "every"; break;
    case RefitSchedule::every_n: refit = c.regular.refit_interval; break;
  }
  return json{{"split_dir", c.split_dir.string()},
              {"social", c.social.string()},
              {"output", c.output.string()},
              {"model", to_string(c.model)},
              {"k", c.train.k},
              {"lambda_theta", c.train.lambda_theta},
              {"lambda_beta", c.train.lambda_beta},
              {"lambda_y", c.train.lambda_y},
              {"max_em_iters", c.train.max_em_iters},
              {"convergence_tol", c.train.convergence_tol},
              {"seed", c.train.seed},
              {"init_scale", c.train.init_scale},
              {"dense_budget", c.train.dense_budget},
              {"threads", c.train.threads},
              {"deterministic", c.deterministic},
              {"wmf_alpha", c.wmf_alpha},
              {"alpha1", c.alpha1},
              {"alpha2", c.alpha2},
              {"s_coeff", c.s_coeff},
              {"k_sr", c.regular.k_sr},
              {"lambda_sr", c.regular.lambda_sr},
              {"lambda_x", c.regular.lambda_x},
              {"lambda_t", c.regular.lambda_t},
              {"lambda_b", c.regular.lambda_b},
              {"lambda_gamma", c.regular.lambda_gamma},
              {"learning_rate", c.regular.learning_rate},
              {"n_sgd_epochs", c.regular.n_sgd_epochs},
              {"refit", refit},
              {"cutoffs", c.cutoffs},
              {"eval_target", c.eval_target == EvalTarget::test ? "test" : "validation"},
              {"repeats", c.repeats}};
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known_keys().count(key)) throw UsageError("unknown config key '" + key + "'");
  RunConfig c;
  try {
    c.split_dir = j.value("split_dir", std::string());
    c.social = j.value("social", std::string());
    c.output = j.value("output", std::string());
    c.model = parse_model_kind(j.value("model", to_string(c.model)));
    c.train.k = j.value("k", c.train.k);
    c.train.lambda_theta = j.value("lambda_theta", c.train.lambda_theta);
    c.train.lambda_beta = j.value("lambda_beta", c.train.lambda_beta);
    c.train.lambda_y = j.value("lambda_y", c.train.lambda_y);
    c.train.max_em_iters = j.value("max_em_iters", c.train.max_em_iters);
    c.train.convergence_tol = j.value("convergence_tol", c.train.convergence_tol);
    c.train.seed = j.value("seed", c.train.seed);
    c.train.init_scale = j.value("init_scale", c.train.init_scale);
    c.train.dense_budget = j.value("dense_budget", c.train.dense_budget);
    c.train.threads = j.value("threads", c.train.threads);
    c.deterministic = j.value("deterministic", c.deterministic);
    c.wmf_alpha = j.value("wmf_alpha", c.wmf_alpha);
    c.alpha1 = j.value("alpha1", c.alpha1);
    c.alpha2 = j.value("alpha2", c.alpha2);
    c.s_coeff = j.value("s_coeff", c.s_coeff);
    c.regular.k_sr = j.value("k_sr", c.regular.k_sr);
    c.regular.lambda_sr = j.value("lambda_sr", c.regular.lambda_sr);
    c.regular.lambda_x = j.value("lambda_x", c.regular.lambda_x);
    c.regular.lambda_t = j.value("lambda_t", c.regular.lambda_t);
    c.regular.lambda_b = j.value("lambda_b", c.regular.lambda_b);
    c.regular.lambda_gamma = j.value("lambda_gamma", c.regular.lambda_gamma);
    c.regular.learning_rate = j.value("learning_rate", c.regular.learning_rate);
    c.regular.n_sgd_epochs = j.value("n_sgd_epochs", c.regular.n_sgd_epochs);
    if (j.contains("refit")) {
      const auto& r = j.at("refit");
      if (r.is_number_integer()) {
        c.regular.refit = RefitSchedule::every_n;
        c.regular.refit_interval = r.get<int>();
      } else if (r == "once") {
        c.regular.refit = RefitSchedule::once;
      } else if (r == "every") {
        c.regular.refit = RefitSchedule::every;
      } else {
        throw UsageError("refit must be \"once\", \"every\" or an integer interval");
      }
    }
    c.cutoffs = j.value("cutoffs", c.cutoffs);
    const std::string target = j.value("eval_target", std::string("test"));
    if (target == "test") c.eval_target = EvalTarget::test;
    else if (target == "validation") c.eval_target = EvalTarget::validation;
    else throw UsageError("eval_target must be test or validation");
    c.repeats = j.value("repeats", c.repeats);
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
  try {
    c.train.validate();
    c.regular.validate();
    BoostHyper{c.s_coeff, c.alpha1, c.alpha2}.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (c.repeats < 1) throw UsageError("repeats must be >= 1");
  if (c.cutoffs.empty() || std::any_of(c.cutoffs.begin(), c.cutoffs.end(), [](Index k) { return k < 1; }))
    throw UsageError("cutoffs must be positive");
  if (!(c.wmf_alpha > 0.0 && c.wmf_alpha <= 1.0)) throw UsageError("wmf_alpha must lie in (0, 1]");
  return c;
}

void require_inputs(const RunConfig& cfg, const char* command) {
  if (cfg.split_dir.empty()) throw UsageError(std::string(command) + ": split_dir is required");
  if (!fs::is_directory(cfg.split_dir)) throw UsageError(std::string(command) + ": no split directory at " + cfg.split_dir.string());
  if (!cfg.social.empty() && !fs::is_regular_file(cfg.social))
    throw UsageError(std::string(command) + ": no social file at " + cfg.social.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

RunConfig RunConfig::from_file(const fs::path& path) { return from_json(read_text(path)); }

RunConfig RunConfig::with_overrides(const std::vector<std::string>& assignments) const {
  json j = config_to_json(*this);
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + a + "' is not key=value");
    const std::string key = a.substr(0, eq);
    const std::string raw = a.substr(eq + 1);
    if (!known_keys().count(key)) throw UsageError("unknown config key '" + key + "'");
    json value = json::parse(raw, nullptr, false);
    j[key] = value.is_discarded() ? json(raw) : value;
  }
  return config_from_json(j);
}

std::string RunConfig::to_json() const { return config_to_json(*this).dump(2); }

TrainConfig RunConfig::effective_train() const {
  TrainConfig t = train;
  if (deterministic) t.threads = 1;
  return t;
}

std::unique_ptr<ExposureModel> make_provider(const RunConfig& cfg, const InteractionMatrix& train,
                                             const SocialGraph& social) {
  switch (cfg.model) {
    case ModelKind::wmf: return std::make_unique<FixedExposure>(cfg.wmf_alpha);
    case ModelKind::expomf:
      return std::make_unique<PopularityExposure>(PopularityExposure::from_popularity(train, cfg.alpha1, cfg.alpha2));
    case ModelKind::serec_regular:
      return std::make_unique<RegularExposure>(train, social, cfg.regular, cfg.train.seed + 1);
    case ModelKind::serec_boost:
      return std::make_unique<BoostExposure>(train, social, BoostHyper{cfg.s_coeff, cfg.alpha1, cfg.alpha2});
  }
  throw UsageError("unknown model kind");
}

SocialGraph load_social_for(const fs::path& path, const IdMap& users) {
  if (path.empty()) return SocialGraph(users.size(), {});
  return load_social(path, users).graph;
}

TrainedModel train_model(const RunConfig& cfg, const InteractionMatrix& train, const SocialGraph& social) {
  TrainedModel out;
  const TrainConfig tc = cfg.effective_train();
  for (int r = 0; r < cfg.repeats; ++r) {
    auto provider = make_provider(cfg, train, social);
    const auto start = std::chrono::steady_clock::now();
    FitResult fit_result = fit(train, *provider, tc);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    out.seconds.push_back(elapsed.count());
    out.fit = std::move(fit_result);
    out.provider = std::move(provider);
  }
  return out;
}

ModelMeta make_meta(const RunConfig& cfg, const TrainedModel& trained) {
  ModelMeta m;
  const FactorModel& f = trained.fit.model;
  m.kind = to_string(cfg.model);
  m.k = f.k();
  m.lambda_theta = f.lambda_theta;
  m.lambda_beta = f.lambda_beta;
  m.lambda_y = f.lambda_y;
  m.seed = cfg.train.seed;
  m.iterations = trained.fit.iterations;
  m.converged = trained.fit.converged;
  m.final_log_likelihood = trained.fit.trace.empty() ? 0.0 : trained.fit.trace.back();
  m.n_users = f.n_users();
  m.n_items = f.n_items();
  switch (cfg.model) {
    case ModelKind::wmf: m.hyper["wmf_alpha"] = cfg.wmf_alpha; break;
    case ModelKind::expomf:
    case ModelKind::serec_boost:
      m.hyper["alpha1"] = cfg.alpha1;
      m.hyper["alpha2"] = cfg.alpha2;
      if (cfg.model == ModelKind::serec_boost) m.hyper["s_coeff"] = cfg.s_coeff;
      break;
    case ModelKind::serec_regular:
      m.hyper["k_sr"] = static_cast<double>(cfg.regular.k_sr);
      m.hyper["lambda_sr"] = cfg.regular.lambda_sr;
      m.hyper["lambda_x"] = cfg.regular.lambda_x;
      m.hyper["lambda_t"] = cfg.regular.lambda_t;
      m.hyper["lambda_b"] = cfg.regular.lambda_b;
      m.hyper["lambda_gamma"] = cfg.regular.lambda_gamma;
      m.hyper["learning_rate"] = cfg.regular.learning_rate;
      m.hyper["n_sgd_epochs"] = cfg.regular.n_sgd_epochs;
      break;
  }
  if (!cfg.split_dir.empty()) m.sources["split_dir"] = fs::absolute(cfg.split_dir).string();
  if (!cfg.social.empty()) m.sources["social"] = fs::absolute(cfg.social).string();
  return m;
}

TrainedModel cmd_train(const RunConfig& cfg) {
  require_inputs(cfg, "train");
  if (cfg.output.empty()) throw UsageError("train: output is required");
  const LoadedSplit data = load_split(cfg.split_dir);
  const SocialGraph social = load_social_for(cfg.social, data.users);
  TrainedModel trained = train_model(cfg, data.split.train, social);

  save_model(cfg.output, trained.fit.model, make_meta(cfg, trained), *trained.provider);
  write_trace(cfg.output / "trace.tsv", trained.fit.trace);

  const auto& s = trained.seconds;
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double max_dev = 0.0;
  for (double v : s) max_dev = std::max(max_dev, std::abs(v - mean));
  json timing = {{"samples", s}, {"mean", mean}, {"max_deviation", max_dev}, {"unit", "seconds"},
                 {"model", to_string(cfg.model)}};
  tsv::open_out(cfg.output / "timing.json") << timing.dump(2) << '\n';
  tsv::open_out(cfg.output / "config.json") << cfg.to_json() << '\n';
  return trained;
}

namespace {

LoadedSplit load_split_checked(const fs::path& split_dir, const LoadedModel& loaded) {
  LoadedSplit data = load_split(split_dir);
  if (data.split.train.n_users() != loaded.meta.n_users || data.split.train.n_items() != loaded.meta.n_items)
    throw std::invalid_argument("model is " + std::to_string(loaded.meta.n_users) + "x" +
                                std::to_string(loaded.meta.n_items) + " but split is " +
                                std::to_string(data.split.train.n_users()) + "x" +
                                std::to_string(data.split.train.n_items()));
  return data;
}

fs::path source_or(const LoadedModel& loaded, const std::string& key, const fs::path& given) {
  if (!given.empty()) return given;
  auto it = loaded.meta.sources.find(key);
  return it == loaded.meta.sources.end() ? fs::path() : fs::path(it->second);
}

}  // namespace

EvalReport cmd_evaluate(const fs::path& model_dir, const fs::path& split_dir, const std::vector<Index>& cutoffs,
                        EvalTarget target, const fs::path& out_dir) {
  const LoadedModel loaded = load_model(model_dir);
  const LoadedSplit data = load_split_checked(split_dir, loaded);
  EvalReport report = evaluate(loaded.model, data.split, target, cutoffs);
  report.model = loaded.meta.kind;
  if (!out_dir.empty()) {
    tsv::open_out(out_dir / "eval.json") << to_json(report) << '\n';
    tsv::open_out(out_dir / "eval.txt") << format_table({report});
  }
  return report;
}

EvalReport cmd_friend_groups(const fs::path& model_dir, const fs::path& split_dir, const fs::path& social,
                             const fs::path& out_path, EvalTarget target) {
  const LoadedModel loaded = load_model(model_dir);
  const LoadedSplit data = load_split_checked(split_dir, loaded);
  const SocialGraph graph = load_social_for(social, data.users);
  const UserGroups groups = group_by_friends(graph, default_friend_buckets());
  EvalReport report = evaluate(loaded.model, data.split, target, {50}, &groups);
  report.model = loaded.meta.kind;
  if (!out_path.empty()) {
    auto out = tsv::open_out(out_path);
    out << "bucket\tn_users\trecall@50\n";
    for (const auto& [label, g] : report.groups)
      out << label << '\t' << g.n_users << '\t' << tsv::format_double(g.metrics.at("recall@50")) << '\n';
  }
  return report;
}

std::unique_ptr<ExposureModel> load_provider(const fs::path& model_dir, const LoadedModel& loaded,
                                             const InteractionMatrix& train, const SocialGraph& social) {
  const auto& h = loaded.meta.hyper;
  auto get = [&](const char* key, double fallback) {
    auto it = h.find(key);
    return it == h.end() ? fallback : it->second;
  };
  switch (parse_model_kind(loaded.meta.kind)) {
    case ModelKind::wmf: return std::make_unique<FixedExposure>(get("wmf_alpha", 0.4));
    case ModelKind::expomf:
      return std::make_unique<PopularityExposure>(
          PopularityExposure::load(model_dir, get("alpha1", 1.0), get("alpha2", 1.0)));
    case ModelKind::serec_regular: {
      RegularHyper rh;
      rh.lambda_sr = get("lambda_sr", rh.lambda_sr);
      rh.lambda_x = get("lambda_x", rh.lambda_x);
      rh.lambda_t = get("lambda_t", rh.lambda_t);
      rh.lambda_b = get("lambda_b", rh.lambda_b);
      rh.lambda_gamma = get("lambda_gamma", rh.lambda_gamma);
      rh.learning_rate = get("learning_rate", rh.learning_rate);
      rh.n_sgd_epochs = static_cast<int>(get("n_sgd_epochs", rh.n_sgd_epochs));
      return std::make_unique<RegularExposure>(RegularExposure::load(model_dir, social, rh, loaded.meta.seed + 1));
    }
    case ModelKind::serec_boost: {
      auto boost = std::make_unique<BoostExposure>(train, social, BoostExposure::load_hyper(model_dir));
      const Posterior p = e_step(train, loaded.model, *boost, std::numeric_limits<Index>::max());
      boost->update(train, p, loaded.model, 0);
      return boost;
    }
  }
  throw UsageError("unknown model kind");
}

std::vector<CurvePoint> exposure_curve(const InteractionMatrix& train, const FactorModel& model,
                                       const ExposureModel& provider, Index user, Index bin_width) {
  if (user < 0 || user >= train.n_users()) throw UsageError("exposure curve: user index out of range");
  if (bin_width < 1) throw UsageError("exposure curve: bin width must be >= 1");
  const Index V = train.n_items();
  Matrix mu(1, V), post(1, V);
  if (auto w = provider.fixed_unobserved_weight()) mu.setConstant(*w);
  else provider.prior_block(user, 0, mu);
  Posterior::streamed(train, model, provider).block(user, 0, post);

  std::map<Index, CurvePoint> bins;
  for (Index i = 0; i < V; ++i) {
    const Index pop = train.item_count(i);
    const Index b = pop / bin_width;
    CurvePoint& pt = bins[b];
    pt.popularity_lo = b * bin_width;
    pt.popularity_hi = b * bin_width + bin_width - 1;
    ++pt.n_items;
    pt.mean_popularity += static_cast<double>(pop);
    pt.mean_mu += mu(0, i);
    pt.mean_posterior += post(0, i);
  }
  std::vector<CurvePoint> out;
  for (auto& [b, pt] : bins) {
    const double n = static_cast<double>(pt.n_items);
    pt.mean_popularity /= n;
    pt.mean_mu /= n;
    pt.mean_posterior /= n;
    out.push_back(pt);
  }
  return out;
}

std::vector<CurvePoint> cmd_exposure_curve(const fs::path& model_dir, const std::string& user_id, Index bin_width,
                                           const fs::path& out_path, const fs::path& split_dir,
                                           const fs::path& social) {
  const LoadedModel loaded = load_model(model_dir);
  const fs::path split_path = source_or(loaded, "split_dir", split_dir);
  if (split_path.empty()) throw UsageError("exposure-curve: model does not record its split; pass --split");
  const LoadedSplit data = load_split_checked(split_path, loaded);
  const auto user = data.users.find(user_id);
  if (!user) throw UsageError("exposure-curve: unknown user id '" + user_id + "'");
  const SocialGraph graph = load_social_for(source_or(loaded, "social", social), data.users);
  const auto provider = load_provider(model_dir, loaded, data.split.train, graph);
  auto curve = exposure_curve(data.split.train, loaded.model, *provider, *user, bin_width);
  if (!out_path.empty()) {
    auto out = tsv::open_out(out_path);
    out << "popularity_lo\tpopularity_hi\tn_items\tmean_popularity\tmean_mu\tmean_posterior\n";
    for (const auto& p : curve)
      out << p.popularity_lo << '\t' << p.popularity_hi << '\t' << p.n_items << '\t'
          << tsv::format_double(p.mean_popularity) << '\t' << tsv::format_double(p.mean_mu) << '\t'
          << tsv::format_double(p.mean_posterior) << '\n';
  }
  return curve;
}

RobustnessTable cmd_robustness(const RunConfig& cfg, const std::vector<double>& keep_probs, std::uint64_t seed) {
  if (keep_probs.empty()) throw UsageError("robustness: no keep probabilities given");
  require_inputs(cfg, "robustness");
  const LoadedSplit data = load_split(cfg.split_dir);
  const SocialGraph full = load_social_for(cfg.social, data.users);

  RobustnessTable table;
  table.keys = metric_keys(cfg.cutoffs);
  for (double kp : keep_probs) {
    const SocialGraph pruned = prune_social(full, kp, seed);
    TrainedModel trained = train_model(cfg, data.split.train, pruned);
    const EvalReport report = evaluate(trained.fit.model, data.split, cfg.eval_target, cfg.cutoffs);
    table.rows.push_back({kp, pruned.n_edges(), report.metrics});
  }
  auto ref = std::max_element(table.rows.begin(), table.rows.end(),
                              [](const RobustnessRow& a, const RobustnessRow& b) { return a.keep_prob < b.keep_prob; });
  auto low = std::min_element(table.rows.begin(), table.rows.end(),
                              [](const RobustnessRow& a, const RobustnessRow& b) { return a.keep_prob < b.keep_prob; });
  for (const auto& [key, value] : ref->metrics)
    table.decay_ratio[key] = value > 0.0 ? (value - low->metrics.at(key)) / value : 0.0;
  return table;
}

void write_robustness(const fs::path& path, const RobustnessTable& table) {
  auto out = tsv::open_out(path);
  write_robustness(out, table);
}

void write_robustness(std::ostream& out, const RobustnessTable& table) {
  const auto& keys = table.keys;
  out << "keep_prob\tn_edges";
  for (const auto& k : keys) out << '\t' << k;
  out << '\n';
  for (const auto& row : table.rows) {
    out << tsv::format_double(row.keep_prob) << '\t' << row.n_edges;
    for (const auto& k : keys) out << '\t' << tsv::format_double(row.metrics.at(k));
    out << '\n';
  }
  out << "decay_ratio\t-";
  for (const auto& k : keys) out << '\t' << tsv::format_double(table.decay_ratio.at(k));
  out << '\n';
}

}  // namespace serec
