#include "ctpd/pipeline.hpp"

#include "ctpd/error.hpp"

#include <spdlog/spdlog.h>

namespace ctpd::pipeline {

std::vector<data::VariableSpec> load_specs(const DataConfig& config) {
  return config.variable_spec.empty() ? data::default_clinical_variables()
                                      : data::load_variable_spec(config.variable_spec);
}

std::vector<data::AdmissionRecord> load_records(const DataConfig& config,
                                                const std::vector<data::VariableSpec>& specs) {
  if (!config.path.empty()) return data::load_admissions(config.path, specs);
  return data::generate_synthetic(config.synthetic, specs).records;
}

namespace {

std::vector<SampleInputs> build(const std::vector<data::AdmissionRecord>& records,
                                const data::NormStats& norm, const data::NoteEmbedder& embedder,
                                const encoding::ReferenceGrid& grid,
                                const std::vector<data::VariableSpec>& specs, int note_dim,
                                std::vector<data::AdmissionRecord>* keep = nullptr) {
  std::vector<SampleInputs> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto ready = data::embed_notes(data::normalize(r, norm), embedder);
    out.push_back(prepare_sample(ready, grid, specs, note_dim));
    if (keep != nullptr) keep->push_back(std::move(ready));
  }
  return out;
}

}  // namespace

PreparedData prepare(const RunConfig& config, const std::vector<data::AdmissionRecord>& records,
                     const std::vector<data::VariableSpec>& specs, const data::NormStats* norm) {
  const auto want = config.model.task;
  for (const auto& r : records)
    if (r.labels.task != want)
      throw ValidationError("admission '" + r.id + "' has labels for a different task than train.task");
  // Admissions without notes need the null-note embedding; otherwise they are dropped.
  std::vector<data::AdmissionRecord> kept;
  kept.reserve(records.size());
  for (const auto& r : records)
    if (config.model.null_note || !r.notes.empty()) kept.push_back(r);
  if (kept.size() != records.size())
    spdlog::warn("dropped {} admissions without notes", records.size() - kept.size());
  auto splits = data::split_by_subject(kept, config.data.split, config.data.split_seed);
  PreparedData out;
  out.specs = specs;
  out.norm = norm != nullptr ? *norm : data::compute_norm_stats(splits.train, specs);
  const auto grid = encoding::ReferenceGrid::uniform(config.data.grid_size, config.data.window_hours);
  data::HashingEmbedder embedder(config.data.note_dim, config.data.embedder_seed);
  const int E = config.data.note_dim;
  out.train = build(splits.train, out.norm, embedder, grid, specs, E);
  out.validation = build(splits.validation, out.norm, embedder, grid, specs, E);
  out.test = build(splits.test, out.norm, embedder, grid, specs, E, &out.test_records);
  return out;
}

ModelConfig model_config(const RunConfig& config, const PreparedData& data) {
  ModelConfig m = config.model;
  m.variables = static_cast<int>(data.specs.size());
  return m;
}

TrainOutcome train_and_evaluate(CtpdModel& model, const RunConfig& config, const PreparedData& data,
                                const training::EpochCallback& on_epoch) {
  TrainOutcome out;
  out.history = training::train_model(model, config.train, data.train, data.validation, on_epoch);
  out.validation = training::evaluate_model(model, data.validation, data.validation);
  out.test = training::evaluate_model(model, data.validation, data.test);
  return out;
}

}  // namespace ctpd::pipeline
