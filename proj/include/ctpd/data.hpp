#pragma once

// Admission records, variable specifications, normalization, subject-level
// splits, the synthetic cohort generator and note embedding.

#include "ctpd/parameters.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ctpd::data {

enum class VariableKind { continuous, categorical };

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  std::vector<std::string> levels;  // categorical only, in ordinal order
  std::string unit;
};

/// The 17 ICU variables: 5 categorical (capillary refill and the four
/// Glasgow coma scale items) and 12 continuous measurements.
std::vector<VariableSpec> default_clinical_variables();
void validate_variable_spec(const std::vector<VariableSpec>& specs);
std::vector<VariableSpec> load_variable_spec(const std::filesystem::path& path);
void save_variable_spec(const std::filesystem::path& path, const std::vector<VariableSpec>& specs);

/// Raw value: a real number, or a category label for categorical variables.
using Value = std::variant<double, std::string>;

struct Observation {
  double time = 0.0;  // hours since admission
  Value value;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct NoteEvent {
  double time = 0.0;
  std::optional<std::string> text;
  std::optional<std::vector<double>> embedding;
  friend bool operator==(const NoteEvent&, const NoteEvent&) = default;
};

enum class Task { binary, multilabel };

inline constexpr int kPhenotypeCount = 25;

struct LabelSet {
  Task task = Task::binary;
  int binary_label = 0;
  std::vector<int> multilabel;  // kPhenotypeCount entries for Task::multilabel

  /// Labels as a 1 x C row (C = 1 or 25).
  Matrix as_row() const;
  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

struct AdmissionRecord {
  std::string id;
  std::string subject_id;
  double window_hours = 48.0;
  std::map<std::string, std::vector<Observation>> series;
  std::vector<NoteEvent> notes;
  LabelSet labels;

  std::size_t observation_count() const;
  friend bool operator==(const AdmissionRecord&, const AdmissionRecord&) = default;
};

/// Throws ValidationError / SchemaError when a record breaks its invariants.
void validate_record(const AdmissionRecord& record, const std::vector<VariableSpec>& specs);

// ---- admissions file (one JSON object per line) -----------------------------

AdmissionRecord parse_admission(const std::string& line, const std::vector<VariableSpec>& specs,
                                std::size_t line_number = 0);
std::string serialize_admission(const AdmissionRecord& record);
std::vector<AdmissionRecord> load_admissions(const std::filesystem::path& path,
                                             const std::vector<VariableSpec>& specs);
void save_admissions(const std::filesystem::path& path, const std::vector<AdmissionRecord>& records);

// ---- normalization -----------------------------------------------------------

struct ContinuousStats {
  double mean = 0.0;
  double stddev = 1.0;
};

struct CategoricalCodes {
  std::map<std::string, int> codes;  // label -> ordinal code
  ContinuousStats code_stats;        // z-scoring of the codes on training data
};

struct NormStats {
  std::map<std::string, ContinuousStats> continuous;
  std::map<std::string, CategoricalCodes> categorical;
};

NormStats compute_norm_stats(const std::vector<AdmissionRecord>& train,
                             const std::vector<VariableSpec>& specs);
/// All values become doubles: continuous are z-scored, categorical labels are
/// mapped to ordinal codes and z-scored with the training code statistics.
AdmissionRecord normalize(const AdmissionRecord& record, const NormStats& stats);

// ---- splits --------------------------------------------------------------------

struct SplitRatios {
  double train = 0.70;
  double validation = 0.10;
  double test = 0.20;
};

struct DatasetSplits {
  std::vector<AdmissionRecord> train;
  std::vector<AdmissionRecord> validation;
  std::vector<AdmissionRecord> test;
};

/// Subject-level split. Validation and test sizes (in subjects) are floored,
/// the remainder goes to train. Assignment depends only on (seed, sorted ids).
DatasetSplits split_by_subject(const std::vector<AdmissionRecord>& records,
                               const SplitRatios& ratios, std::uint64_t seed);

// ---- synthetic cohort ---------------------------------------------------------

enum class LabelRule {
  motif_presence_binary,    // label = motif 0 present
  motif_subset_multilabel,  // phenotype l = any motif of a fixed subset S_l present
  motif_timing_binary,      // all motifs present; label = motif 0 starts before motif 1
  motif_overlap_binary,     // all motifs present; label = motifs 0 and 1 overlap in time
};

std::string to_string(LabelRule rule);
LabelRule parse_label_rule(const std::string& text);

struct SyntheticConfig {
  int n_admissions = 1000;
  int n_motifs = 2;
  double motif_length_hours = 12.0;
  double observation_rate = 0.25;  // expected observations per variable per hour
  double note_rate = 4.0;          // Poisson mean of notes per admission (at least 1 is kept)
  LabelRule label_rule = LabelRule::motif_presence_binary;
  double noise_std = 0.3;
  std::uint64_t seed = 0;
  double window_hours = 48.0;
  int note_dim = 128;
  int max_admissions_per_subject = 1;

  void validate() const;
};

/// Ground truth of one generated admission.
struct MotifTruth {
  std::string id;
  std::vector<int> motifs;
  std::vector<double> onsets;  // hours, parallel to motifs
  double length_hours = 0.0;
  friend bool operator==(const MotifTruth&, const MotifTruth&) = default;
};

struct SyntheticDataset {
  std::vector<AdmissionRecord> records;
  std::vector<MotifTruth> truth;  // parallel to records
};

/// Shape of motif `motif` at relative position u in [0, 1]; 0 outside.
double motif_shape(int motif, double u);

SyntheticDataset generate_synthetic(const SyntheticConfig& config,
                                    const std::vector<VariableSpec>& specs);

/// Writes `<path>` (admissions) and `<path>.motifs` (ground truth sidecar).
void save_synthetic(const std::filesystem::path& path, const SyntheticDataset& dataset);
std::vector<MotifTruth> load_motif_sidecar(const std::filesystem::path& path);
std::filesystem::path motif_sidecar_path(const std::filesystem::path& admissions_path);

// ---- note embedding -------------------------------------------------------------

class NoteEmbedder {
 public:
  virtual ~NoteEmbedder() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

/// Seeded feature-hashing bag of words, L2-normalized. Empty text maps to the
/// zero vector.
class HashingEmbedder final : public NoteEmbedder {
 public:
  HashingEmbedder(int dim, std::uint64_t seed);
  int dim() const override { return dim_; }
  std::vector<double> embed(const std::string& text) const override;

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Fills every note's embedding. Precomputed embeddings are kept as-is but
/// must match the embedder dimension.
AdmissionRecord embed_notes(const AdmissionRecord& record, const NoteEmbedder& embedder);

}  // namespace ctpd::data
