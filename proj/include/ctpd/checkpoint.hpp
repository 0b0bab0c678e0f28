#pragma once

// Checkpoint directory: params.bin (named matrices), manifest.json (resolved
// config, hash, epoch, validation metrics, normalization) and history.csv.

#include "ctpd/config.hpp"
#include "ctpd/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>

namespace ctpd::checkpoint {

void save_params(const std::filesystem::path& path, const ParameterStore& store);
/// Loads values by name; layout (names and shapes) must match `store`.
void load_params(const std::filesystem::path& path, ParameterStore& store);

struct Manifest {
  std::string config_text;  // rendered RunConfig
  std::string config_hash;
  int variables = 0;
  int epoch = -1;
  metrics::MetricsReport validation;
  data::NormStats norm;
};

void save(const std::filesystem::path& dir, const CtpdModel& model, const RunConfig& config,
          const training::TrainHistory& history, const metrics::MetricsReport& validation,
          const data::NormStats& norm);

struct Loaded {
  RunConfig config;
  Manifest manifest;
  std::unique_ptr<CtpdModel> model;
};

Loaded load(const std::filesystem::path& dir);

void write_history_csv(const std::filesystem::path& path, const training::TrainHistory& history);
std::vector<std::string> history_columns();

nlohmann::json report_to_json(const metrics::MetricsReport& report);
metrics::MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace ctpd::checkpoint
