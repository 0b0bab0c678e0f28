#pragma once

// Ablation grid: cells of toggles, each trained over several seeds.

#include "ctpd/pipeline.hpp"

#include <nlohmann/json.hpp>

namespace ctpd::ablation {

/// A cell is a '+'-joined list of toggles; "full" is the unmodified model.
/// Toggles: no-prototypes, no-timestamp-embeddings, no-multiscale, no-tpnce,
/// no-recon, lambda1=X, lambda2=X, k=N with N in {4, 8, 16, 32}.
struct Cell {
  std::string name;
  std::vector<std::string> toggles;
};

/// Comma-separated cells and/or presets (components, losses, loss-weights,
/// prototypes).
std::vector<Cell> parse_cells(const std::string& spec);
std::vector<std::uint64_t> parse_seeds(const std::string& spec);
/// Applies a cell to a copy of `base`; unknown toggles throw ConfigError.
RunConfig apply(const Cell& cell, const RunConfig& base);

struct Row {
  std::string cell;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  double seconds = 0.0;
  metrics::MetricsReport validation;
  metrics::MetricsReport test;
};

struct Summary {
  std::string cell;
  std::size_t runs = 0;
  double auroc_mean = 0.0, auroc_std = 0.0;
  double aupr_mean = 0.0, aupr_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
};

using RowCallback = std::function<void(const Row&)>;

std::vector<Row> run(const RunConfig& base, const std::vector<Cell>& cells,
                     const std::vector<std::uint64_t>& seeds,
                     const std::vector<data::AdmissionRecord>& records,
                     const std::vector<data::VariableSpec>& specs, const RowCallback& on_row = {});

/// Mean and sample standard deviation of the test metrics per cell, in the
/// order cells first appear.
std::vector<Summary> summarize(const std::vector<Row>& rows);
nlohmann::json to_json(const std::vector<Row>& rows, const std::vector<Summary>& summary);
std::string render_table(const std::vector<Summary>& summary);

}  // namespace ctpd::ablation
