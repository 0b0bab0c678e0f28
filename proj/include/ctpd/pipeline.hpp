#pragma once

// Data preparation and the train / evaluate stages shared by the command-line
// tool and the tests.

#include "ctpd/config.hpp"

#include <filesystem>

namespace ctpd::pipeline {

struct PreparedData {
  std::vector<data::VariableSpec> specs;
  data::NormStats norm;
  std::vector<SampleInputs> train;
  std::vector<SampleInputs> validation;
  std::vector<SampleInputs> test;
  std::vector<data::AdmissionRecord> test_records;  // normalized and embedded
};

std::vector<data::VariableSpec> load_specs(const DataConfig& config);

/// Raw admissions: loaded from data.path, or generated when it is empty.
std::vector<data::AdmissionRecord> load_records(const DataConfig& config,
                                                const std::vector<data::VariableSpec>& specs);

/// Split by subject, fit normalization on train, embed notes and build model
/// inputs. Passing `norm` reuses existing statistics instead of refitting.
PreparedData prepare(const RunConfig& config, const std::vector<data::AdmissionRecord>& records,
                     const std::vector<data::VariableSpec>& specs,
                     const data::NormStats* norm = nullptr);

/// Model config completed with the data's variable count.
ModelConfig model_config(const RunConfig& config, const PreparedData& data);

struct TrainOutcome {
  training::TrainHistory history;
  metrics::MetricsReport validation;  // thresholds and metrics on validation
  metrics::MetricsReport test;        // thresholds from validation
};

TrainOutcome train_and_evaluate(CtpdModel& model, const RunConfig& config, const PreparedData& data,
                                const training::EpochCallback& on_epoch = {});

}  // namespace ctpd::pipeline
