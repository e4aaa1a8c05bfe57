#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "serec/rating_core.hpp"

namespace serec {

struct ModelMeta {
  std::string kind;
  Index k = 0;
  double lambda_theta = 0.0;
  double lambda_beta = 0.0;
  double lambda_y = 0.0;
  std::uint64_t seed = 0;
  int iterations = 0;
  bool converged = false;
  double final_log_likelihood = 0.0;
  Index n_users = 0;
  Index n_items = 0;
  // Exposure-model hyperparameters and provenance (split directory, social file).
  std::map<std::string, double> hyper;
  std::map<std::string, std::string> sources;
};

// Writes meta.json, theta.tsv, beta.tsv and the provider's own files.
void save_model(const std::filesystem::path& dir, const FactorModel& model, const ModelMeta& meta,
                const ExposureModel& provider);

struct LoadedModel {
  FactorModel model;
  ModelMeta meta;
};

LoadedModel load_model(const std::filesystem::path& dir);

void write_trace(const std::filesystem::path& path, const std::vector<double>& trace);
std::vector<double> read_trace(const std::filesystem::path& path);

}  // namespace serec
