// serec: train, evaluate and analyse exposure-aware social recommenders.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "serec/data.hpp"
#include "serec/experiments.hpp"
#include "serec/metrics.hpp"
#include "serec/synthetic.hpp"

namespace fs = std::filesystem;
using namespace serec;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitFailure = 2;

EvalTarget parse_target(const std::string& name) {
  if (name == "test") return EvalTarget::test;
  if (name == "validation") return EvalTarget::validation;
  throw UsageError("target must be test or validation");
}

void write_or_print(const fs::path& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << text;
}

// Shared by train and robustness.
struct ConfigArgs {
  std::string config;
  std::vector<std::string> sets;
  bool deterministic = false;
  std::string split, social, output, model;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--set", sets, "override a config key (key=value), repeatable");
    cmd->add_flag("--deterministic", deterministic, "single-threaded, bit-reproducible run");
    cmd->add_option("--split", split, "split directory (config: split_dir)");
    cmd->add_option("--social", social, "social edge list (config: social)");
    cmd->add_option("--output", output, "output directory (config: output)");
    cmd->add_option("--model", model, "wmf | expomf | serec-regular | serec-boost");
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : RunConfig::from_file(config);
    std::vector<std::string> all;
    auto quoted = [](const std::string& v) { return nlohmann::json(v).dump(); };
    if (!split.empty()) all.push_back("split_dir=" + quoted(split));
    if (!social.empty()) all.push_back("social=" + quoted(social));
    if (!output.empty()) all.push_back("output=" + quoted(output));
    if (!model.empty()) all.push_back("model=" + quoted(model));
    all.insert(all.end(), sets.begin(), sets.end());
    if (deterministic) all.push_back("deterministic=true");
    return cfg.with_overrides(all);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exposure-aware social recommendation"};
  app.require_subcommand(1);

  // stats
  auto* stats = app.add_subcommand("stats", "dataset statistics as JSON");
  std::string st_inter, st_social, st_out;
  std::optional<double> st_min_rating;
  stats->add_option("--interactions", st_inter, "user item [rating] file")->required()->check(CLI::ExistingFile);
  stats->add_option("--social", st_social, "truster trustee file")->check(CLI::ExistingFile);
  stats->add_option("--min-rating", st_min_rating, "drop interactions rated below this");
  stats->add_option("--out", st_out, "write JSON here instead of stdout");

  // split
  auto* split_cmd = app.add_subcommand("split", "seeded train/validation/test split");
  std::string sp_inter, sp_out;
  std::optional<double> sp_min_rating;
  double sp_train = 0.7, sp_val = 0.2;
  std::uint64_t sp_seed = 0;
  split_cmd->add_option("--interactions", sp_inter)->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--out", sp_out, "split directory")->required();
  split_cmd->add_option("--train", sp_train, "train fraction")->capture_default_str();
  split_cmd->add_option("--validation", sp_val, "validation fraction")->capture_default_str();
  split_cmd->add_option("--seed", sp_seed)->capture_default_str();
  split_cmd->add_option("--min-rating", sp_min_rating);

  // train
  auto* train = app.add_subcommand("train", "fit a model and save it");
  ConfigArgs train_args;
  train_args.add(train);

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "ranking metrics of a saved model");
  std::string ev_model, ev_split, ev_out, ev_target = "test";
  std::vector<Index> ev_cutoffs{10, 50, 100};
  evaluate_cmd->add_option("--model-dir", ev_model)->required()->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--split", ev_split)->required()->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--cutoffs", ev_cutoffs)->delimiter(',')->capture_default_str();
  evaluate_cmd->add_option("--target", ev_target, "test | validation")->capture_default_str();
  evaluate_cmd->add_option("--out", ev_out, "directory for eval.json and eval.txt");

  // friend-groups
  auto* groups_cmd = app.add_subcommand("friend-groups", "recall@50 by friend count");
  std::string fg_model, fg_split, fg_social, fg_out, fg_target = "test";
  groups_cmd->add_option("--model-dir", fg_model)->required()->check(CLI::ExistingDirectory);
  groups_cmd->add_option("--split", fg_split)->required()->check(CLI::ExistingDirectory);
  groups_cmd->add_option("--social", fg_social)->required()->check(CLI::ExistingFile);
  groups_cmd->add_option("--target", fg_target)->capture_default_str();
  groups_cmd->add_option("--out", fg_out, "TSV output (default stdout)");

  // exposure-curve
  auto* curve_cmd = app.add_subcommand("exposure-curve", "exposure prior and posterior by item popularity");
  std::string ec_model, ec_user, ec_out, ec_split, ec_social;
  Index ec_bin = 10;
  curve_cmd->add_option("--model-dir", ec_model)->required()->check(CLI::ExistingDirectory);
  curve_cmd->add_option("--user", ec_user, "external user id")->required();
  curve_cmd->add_option("--bin-width", ec_bin, "popularity bin width in clicks")->capture_default_str();
  curve_cmd->add_option("--out", ec_out, "TSV output (default stdout)");
  curve_cmd->add_option("--split", ec_split, "override the split recorded in the model");
  curve_cmd->add_option("--social", ec_social, "override the social file recorded in the model");

  // robustness
  auto* robust = app.add_subcommand("robustness", "metrics under random social pruning");
  ConfigArgs robust_args;
  robust_args.add(robust);
  std::vector<double> rb_keep{1.0, 0.6, 0.2};
  std::uint64_t rb_seed = 0;
  std::string rb_out;
  robust->add_option("--keep-probs", rb_keep)->delimiter(',')->capture_default_str();
  robust->add_option("--prune-seed", rb_seed)->capture_default_str();
  robust->add_option("--out", rb_out, "TSV output (default stdout)");

  // generate
  auto* gen = app.add_subcommand("generate", "synthetic data with known exposure");
  SyntheticSpec gs;
  std::string gen_out;
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--users", gs.n_users)->capture_default_str();
  gen->add_option("--items", gs.n_items)->capture_default_str();
  gen->add_option("--k", gs.k)->capture_default_str();
  gen->add_option("--lambda-theta", gs.lambda_theta)->capture_default_str();
  gen->add_option("--lambda-beta", gs.lambda_beta)->capture_default_str();
  gen->add_option("--social-density", gs.social_density)->capture_default_str();
  gen->add_option("--base-exposure", gs.base_exposure)->capture_default_str();
  gen->add_option("--s-coeff", gs.s_coeff)->capture_default_str();
  gen->add_option("--seed", gs.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*stats) {
      const auto loaded = load_interactions(st_inter, st_min_rating);
      const SocialGraph graph =
          st_social.empty() ? SocialGraph(loaded.users.size(), {}) : load_social(st_social, loaded.users).graph;
      write_or_print(st_out, to_json(dataset_stats(loaded.matrix, graph)) + "\n");
    } else if (*split_cmd) {
      const auto loaded = load_interactions(sp_inter, sp_min_rating);
      const auto parts = split(loaded.matrix, {sp_train, sp_val}, sp_seed);
      save_split(sp_out, parts, loaded.users, loaded.items);
      std::printf("train\t%lld\nvalidation\t%lld\ntest\t%lld\n", static_cast<long long>(parts.train.nnz()),
                  static_cast<long long>(parts.validation.nnz()), static_cast<long long>(parts.test.nnz()));
    } else if (*train) {
      const RunConfig cfg = train_args.resolve();
      const TrainedModel trained = cmd_train(cfg);
      std::printf("model\t%s\niterations\t%d\nconverged\t%s\nobjective\t%.10g\noutput\t%s\n",
                  to_string(cfg.model).c_str(), trained.fit.iterations, trained.fit.converged ? "true" : "false",
                  trained.fit.trace.empty() ? 0.0 : trained.fit.trace.back(), cfg.output.string().c_str());
    } else if (*evaluate_cmd) {
      const EvalReport report = cmd_evaluate(ev_model, ev_split, ev_cutoffs, parse_target(ev_target), ev_out);
      std::cout << format_table({report}, metric_keys(ev_cutoffs));
    } else if (*groups_cmd) {
      const EvalReport report = cmd_friend_groups(fg_model, fg_split, fg_social, fg_out, parse_target(fg_target));
      if (fg_out.empty()) {
        std::cout << "bucket\tn_users\trecall@50\n";
        for (const auto& [label, g] : report.groups)
          std::printf("%s\t%lld\t%.6f\n", label.c_str(), static_cast<long long>(g.n_users), g.metrics.at("recall@50"));
      }
    } else if (*curve_cmd) {
      const auto curve = cmd_exposure_curve(ec_model, ec_user, ec_bin, ec_out, ec_split, ec_social);
      if (ec_out.empty()) {
        std::cout << "popularity_lo\tpopularity_hi\tn_items\tmean_popularity\tmean_mu\tmean_posterior\n";
        for (const auto& p : curve)
          std::printf("%lld\t%lld\t%lld\t%.6f\t%.6g\t%.6g\n", static_cast<long long>(p.popularity_lo),
                      static_cast<long long>(p.popularity_hi), static_cast<long long>(p.n_items), p.mean_popularity,
                      p.mean_mu, p.mean_posterior);
      }
    } else if (*robust) {
      const RunConfig cfg = robust_args.resolve();
      const RobustnessTable table = cmd_robustness(cfg, rb_keep, rb_seed);
      if (rb_out.empty()) write_robustness(std::cout, table);
      else write_robustness(fs::path(rb_out), table);
    } else if (*gen) {
      gs.validate();
      const SyntheticData data = generate(gs);
      write_synthetic(gen_out, data);
      std::printf("users\t%lld\nitems\t%lld\nclicks\t%lld\nedges\t%lld\n", static_cast<long long>(gs.n_users),
                  static_cast<long long>(gs.n_items), static_cast<long long>(data.clicks.nnz()),
                  static_cast<long long>(data.graph.n_edges()));
    }
  } catch (const UsageError& e) {
    std::cerr << "serec: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "serec: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "serec: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
