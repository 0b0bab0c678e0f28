#pragma once

// Encoders that turn irregular observations and timed note embeddings into
// regular T x D embeddings on a shared reference grid.

#include "ctpd/data.hpp"
#include "ctpd/layers.hpp"

#include <vector>

namespace ctpd::encoding {

using ad::Var;
using nn::Graph;

struct ReferenceGrid {
  double window_hours = 48.0;
  std::vector<double> points;

  /// T points at (a + 1) * W / T, a = 0..T-1: uniform spacing W / T ending at W.
  static ReferenceGrid uniform(int T, double window_hours);
  /// Explicit points (strictly increasing); window defaults to the last point.
  static ReferenceGrid from_points(std::vector<double> points, double window_hours = -1.0);
  int size() const { return static_cast<int>(points.size()); }
};

/// Checks T >= 4 and T divisible by 4 (needed by the multi-scale pooling).
void validate_grid_size(int T);

/// LOCF imputation result; both matrices are d_m x T.
struct ImputedSeries {
  Matrix values;
  Matrix mask;
};

/// Entry (j, a) holds the latest observation of variable j at time <=
/// points[a], else `fill`. Values must already be normalized (doubles).
ImputedSeries impute_locf(const data::AdmissionRecord& record, const ReferenceGrid& grid,
                          const std::vector<data::VariableSpec>& specs, double fill = 0.0);

/// Irregular observations keyed by unique time. values/mask are N x d_m.
struct IrregularSeries {
  Matrix times;  // N x 1, hours
  Matrix values;
  Matrix mask;
  Eigen::Index count() const { return times.rows(); }
};

/// Collects observations with time <= grid.window_hours.
IrregularSeries collect_observations(const data::AdmissionRecord& record, const ReferenceGrid& grid,
                                     const std::vector<data::VariableSpec>& specs);

struct NoteSeries {
  Matrix times;       // M x 1, hours
  Matrix embeddings;  // M x E
  Eigen::Index count() const { return times.rows(); }
};

/// Notes with time <= grid.window_hours; embeddings must already be resolved.
NoteSeries collect_notes(const data::AdmissionRecord& record, const ReferenceGrid& grid, int note_dim);

// ---- Time2Vec -------------------------------------------------------------------

/// V time embeddings of width `dim`. Row v of omega/phi belongs to function v;
/// column 0 is the linear component (weight, bias), the rest are sinusoids.
struct Time2Vec {
  ParamId omega;  // V x dim
  ParamId phi;    // V x dim
  int functions = 1;
  int dim = 2;

  static Time2Vec create(ParameterStore& store, const std::string& name, int functions, int dim,
                         Rng& rng);
  /// times: N x 1 -> N x dim for function v.
  Var operator()(const Graph& g, Var times, int v) const;
};

/// Plain evaluation: concatenation over all functions of [linear, sin...].
RowVector time2vec(double t, const Matrix& omega, const Matrix& phi);

// ---- mTAND --------------------------------------------------------------------------

/// Multi-time attention interpolation with one head per Time2Vec function.
/// With a channel mask (MITS) values are interpolated per channel; without
/// one (notes) values are first projected and attended as whole vectors.
struct MTand {
  Time2Vec time_embedding;
  std::vector<nn::Linear> query;  // per head, dim -> dim
  std::vector<nn::Linear> key;    // per head, dim -> dim
  nn::Linear value;               // notes only: E -> D
  nn::Linear output;              // heads * channels -> D
  bool channel_masked = true;
  double time_scale = 1.0;        // times are divided by this before Time2Vec

  static MTand create(ParameterStore& store, const std::string& name, Eigen::Index channels,
                      Eigen::Index width, int functions, int time_dim, bool channel_masked,
                      double time_scale, Rng& rng);
  int heads() const { return static_cast<int>(query.size()); }

  /// Attention scores (T x N) of head h.
  Var scores(const Graph& g, const ReferenceGrid& grid, Var key_times, int h) const;
  /// values: N x C; mask: N x C (ignored when not channel_masked).
  Var operator()(const Graph& g, const ReferenceGrid& grid, const Matrix& times,
                 const Matrix& values, const Matrix& mask) const;
  Var operator()(const Graph& g, const ReferenceGrid& grid, Var times, Var values,
                 const Matrix& mask) const;
};

// ---- gate ---------------------------------------------------------------------------

struct Gate {
  nn::Mlp mlp;  // 2D -> D -> D, logistic output

  static Gate create(ParameterStore& store, const std::string& name, Eigen::Index width, Rng& rng);
  Var activations(const Graph& g, Var e_imp, Var e_mtand) const;
  /// g * e_imp + (1 - g) * e_mtand
  Var operator()(const Graph& g, Var e_imp, Var e_mtand) const;
};

// ---- composed encoders ----------------------------------------------------------------

struct MitsEncoder {
  nn::Conv1d conv;
  MTand mtand;
  Gate gate;

  static MitsEncoder create(ParameterStore& store, const std::string& name, Eigen::Index variables,
                            Eigen::Index width, int functions, int time_dim, double window_hours,
                            Rng& rng);
  /// imputed: d_m x T (LOCF values).
  Var operator()(const Graph& g, const ReferenceGrid& grid, const Matrix& imputed,
                 const IrregularSeries& obs) const;
};

struct NoteEncoder {
  MTand mtand;
  ParamId null_note;  // 1 x E, used only when enabled and a record has no notes
  bool use_null_note = false;

  static NoteEncoder create(ParameterStore& store, const std::string& name, Eigen::Index note_dim,
                            Eigen::Index width, int functions, int time_dim, double window_hours,
                            bool use_null_note, Rng& rng);
  Var operator()(const Graph& g, const ReferenceGrid& grid, const NoteSeries& notes) const;
};

}  // namespace ctpd::encoding
