#pragma once

// Run configuration: a strict `key = value` file with dotted keys, optional
// `[section]` headers (prefixing the keys below them) and `#` comments.

#include "ctpd/data.hpp"
#include "ctpd/model.hpp"
#include "ctpd/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace ctpd {

struct DataConfig {
  std::string path;           // admissions file; empty -> synthetic cohort
  std::string variable_spec;  // JSON list; empty -> the built-in 17 variables
  int grid_size = 24;
  double window_hours = 48.0;
  int note_dim = 128;
  std::uint64_t embedder_seed = 0;
  data::SplitRatios split;
  std::uint64_t split_seed = 0;
  data::SyntheticConfig synthetic;
};

struct AblationConfig {
  std::string cells = "components";  // preset name or '+'-joined toggles, separated by ','
  std::string seeds = "0,1,2";
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  training::TrainConfig train;
  AblationConfig ablation;
  std::string output_dir = "runs";

  /// Copies the data-derived fields (grid, window, note width) into the model
  /// and synthetic sections and validates everything.
  void resolve();
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);
/// Every key with its resolved value, one `key = value` line each.
std::string render_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);
/// All accepted keys, in file order.
std::vector<std::string> config_keys();

}  // namespace ctpd
