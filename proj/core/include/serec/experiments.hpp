#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "serec/data.hpp"
#include "serec/exposure_boost.hpp"
#include "serec/exposure_popularity.hpp"
#include "serec/exposure_regular.hpp"
#include "serec/metrics.hpp"
#include "serec/model_io.hpp"
#include "serec/rating_core.hpp"

namespace serec {

enum class ModelKind { wmf, expomf, serec_regular, serec_boost };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

// Thrown for bad configuration or command-line input (exit code 1).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::filesystem::path split_dir;
  std::filesystem::path social;  // empty: no social information
  std::filesystem::path output;
  ModelKind model = ModelKind::serec_boost;

  TrainConfig train;
  double wmf_alpha = 0.4;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double s_coeff = 5.0;
  RegularHyper regular;

  std::vector<Index> cutoffs{10, 50, 100};
  EvalTarget eval_target = EvalTarget::test;
  int repeats = 1;
  bool deterministic = false;

  // Parses a JSON object; unknown keys are a UsageError.
  static RunConfig from_json(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);
  // Applies `key=value` overrides; values are parsed as JSON when possible.
  RunConfig with_overrides(const std::vector<std::string>& assignments) const;
  std::string to_json() const;

  TrainConfig effective_train() const;
};

// Provider for `cfg.model` over the training interactions and trust graph.
std::unique_ptr<ExposureModel> make_provider(const RunConfig& cfg, const InteractionMatrix& train,
                                             const SocialGraph& social);

// Provider state for a saved model; boost priors are rebuilt from one E-step
// of the saved factors followed by the boost update.
std::unique_ptr<ExposureModel> load_provider(const std::filesystem::path& model_dir, const LoadedModel& loaded,
                                             const InteractionMatrix& train, const SocialGraph& social);

// Reads the social file through the split's user ids; an empty path gives an
// edgeless graph.
SocialGraph load_social_for(const std::filesystem::path& path, const IdMap& users);

struct TrainedModel {
  FitResult fit;
  std::unique_ptr<ExposureModel> provider;
  std::vector<double> seconds;  // one sample per repeat
};

// Fits `cfg.repeats` times from the same seed and keeps the last result.
TrainedModel train_model(const RunConfig& cfg, const InteractionMatrix& train, const SocialGraph& social);

ModelMeta make_meta(const RunConfig& cfg, const TrainedModel& trained);

// Writes the model directory plus trace.tsv and timing.json into cfg.output.
TrainedModel cmd_train(const RunConfig& cfg);

// Writes eval.json and eval.txt into out_dir when it is non-empty.
EvalReport cmd_evaluate(const std::filesystem::path& model_dir, const std::filesystem::path& split_dir,
                        const std::vector<Index>& cutoffs, EvalTarget target,
                        const std::filesystem::path& out_dir = {});

// recall@50 per friend-count bucket; writes friend-groups.tsv to out_path when given.
EvalReport cmd_friend_groups(const std::filesystem::path& model_dir, const std::filesystem::path& split_dir,
                             const std::filesystem::path& social, const std::filesystem::path& out_path = {},
                             EvalTarget target = EvalTarget::test);

struct CurvePoint {
  Index popularity_lo = 0;
  Index popularity_hi = 0;  // inclusive
  Index n_items = 0;
  double mean_popularity = 0.0;
  double mean_mu = 0.0;
  double mean_posterior = 0.0;
};

// Exposure prior and posterior for one user's items, binned by training
// popularity in bins of `bin_width` clicks. Unknown users are a UsageError.
std::vector<CurvePoint> exposure_curve(const InteractionMatrix& train, const FactorModel& model,
                                       const ExposureModel& provider, Index user, Index bin_width);

std::vector<CurvePoint> cmd_exposure_curve(const std::filesystem::path& model_dir, const std::string& user_id,
                                           Index bin_width, const std::filesystem::path& out_path = {},
                                           const std::filesystem::path& split_dir = {},
                                           const std::filesystem::path& social = {});

struct RobustnessRow {
  double keep_prob = 1.0;
  Index n_edges = 0;
  std::map<std::string, double> metrics;
};

struct RobustnessTable {
  std::vector<std::string> keys;  // column order
  std::vector<RobustnessRow> rows;
  // (m(largest keep) - m(smallest keep)) / m(largest keep) per metric.
  std::map<std::string, double> decay_ratio;
};

RobustnessTable cmd_robustness(const RunConfig& cfg, const std::vector<double>& keep_probs, std::uint64_t seed);
void write_robustness(std::ostream& out, const RobustnessTable& table);
void write_robustness(const std::filesystem::path& path, const RobustnessTable& table);

}  // namespace serec
