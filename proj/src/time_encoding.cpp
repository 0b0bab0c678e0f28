#include "ctpd/time_encoding.hpp"

#include "ctpd/error.hpp"

#include <cmath>
#include <map>
#include <numbers>

namespace ctpd::encoding {

ReferenceGrid ReferenceGrid::uniform(int T, double window_hours) {
  if (T < 1) throw ConfigError("grid size must be positive");
  if (!(window_hours > 0.0)) throw ConfigError("grid window must be positive");
  ReferenceGrid g;
  g.window_hours = window_hours;
  g.points.resize(static_cast<std::size_t>(T));
  for (int a = 0; a < T; ++a) g.points[static_cast<std::size_t>(a)] = (a + 1) * window_hours / T;
  return g;
}

ReferenceGrid ReferenceGrid::from_points(std::vector<double> points, double window_hours) {
  if (points.empty()) throw ConfigError("grid needs at least one point");
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i] > points[i - 1])) throw ConfigError("grid points must be strictly increasing");
  ReferenceGrid g;
  g.window_hours = window_hours > 0.0 ? window_hours : points.back();
  g.points = std::move(points);
  return g;
}

void validate_grid_size(int T) {
  if (T < 4 || T % 4 != 0)
    throw ConfigError("grid size T must be >= 4 and divisible by 4 (got " + std::to_string(T) + ")");
}

namespace {

double numeric(const data::Observation& o, const data::AdmissionRecord& r, const std::string& name) {
  const auto* v = std::get_if<double>(&o.value);
  if (v == nullptr)
    throw ValidationError("admission '" + r.id + "': '" + name +
                          "' holds a raw label; normalize the record first");
  return *v;
}

}  // namespace

ImputedSeries impute_locf(const data::AdmissionRecord& record, const ReferenceGrid& grid,
                          const std::vector<data::VariableSpec>& specs, double fill) {
  const auto dm = static_cast<Eigen::Index>(specs.size());
  const auto T = static_cast<Eigen::Index>(grid.size());
  ImputedSeries out{Matrix::Constant(dm, T, fill), Matrix::Zero(dm, T)};
  for (Eigen::Index j = 0; j < dm; ++j) {
    const auto& name = specs[static_cast<std::size_t>(j)].name;
    auto it = record.series.find(name);
    if (it == record.series.end()) continue;
    const auto& obs = it->second;
    std::size_t next = 0;
    for (Eigen::Index a = 0; a < T; ++a) {
      const double p = grid.points[static_cast<std::size_t>(a)];
      while (next < obs.size() && obs[next].time <= p) ++next;
      if (next > 0) {
        out.values(j, a) = numeric(obs[next - 1], record, name);
        out.mask(j, a) = 1.0;
      }
    }
  }
  return out;
}

IrregularSeries collect_observations(const data::AdmissionRecord& record, const ReferenceGrid& grid,
                                     const std::vector<data::VariableSpec>& specs) {
  std::map<double, std::map<std::size_t, double>> by_time;
  for (std::size_t j = 0; j < specs.size(); ++j) {
    auto it = record.series.find(specs[j].name);
    if (it == record.series.end()) continue;
    for (const auto& o : it->second) {
      if (o.time > grid.window_hours) continue;
      by_time[o.time][j] = numeric(o, record, specs[j].name);
    }
  }
  const auto n = static_cast<Eigen::Index>(by_time.size());
  const auto dm = static_cast<Eigen::Index>(specs.size());
  IrregularSeries out{Matrix(n, 1), Matrix::Zero(n, dm), Matrix::Zero(n, dm)};
  Eigen::Index row = 0;
  for (const auto& [t, vals] : by_time) {
    out.times(row, 0) = t;
    for (const auto& [j, v] : vals) {
      out.values(row, static_cast<Eigen::Index>(j)) = v;
      out.mask(row, static_cast<Eigen::Index>(j)) = 1.0;
    }
    ++row;
  }
  return out;
}

NoteSeries collect_notes(const data::AdmissionRecord& record, const ReferenceGrid& grid, int note_dim) {
  std::vector<const data::NoteEvent*> kept;
  for (const auto& n : record.notes)
    if (n.time <= grid.window_hours) kept.push_back(&n);
  NoteSeries out{Matrix(static_cast<Eigen::Index>(kept.size()), 1),
                 Matrix(static_cast<Eigen::Index>(kept.size()), note_dim)};
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& n = *kept[i];
    if (!n.embedding)
      throw ValidationError("admission '" + record.id + "': note without embedding; embed notes first");
    if (static_cast<int>(n.embedding->size()) != note_dim)
      throw ValidationError("admission '" + record.id + "': note embedding has dimension " +
                            std::to_string(n.embedding->size()) + ", expected " +
                            std::to_string(note_dim));
    const auto r = static_cast<Eigen::Index>(i);
    out.times(r, 0) = n.time;
    for (int d = 0; d < note_dim; ++d) out.embeddings(r, d) = (*n.embedding)[static_cast<std::size_t>(d)];
  }
  return out;
}

// ---------------------------------------------------------------------------

Time2Vec Time2Vec::create(ParameterStore& store, const std::string& name, int functions, int dim,
                          Rng& rng) {
  if (functions < 1) throw ConfigError("at least one Time2Vec function is required");
  if (dim < 2) throw ConfigError("Time2Vec width must be at least 2");
  Matrix omega = init::uniform(functions, dim, 1.0, 30.0, rng);
  Matrix phi = init::uniform(functions, dim, 0.0, 2.0 * std::numbers::pi, rng);
  for (int v = 0; v < functions; ++v) {
    omega(v, 0) = 1.0;
    phi(v, 0) = 0.0;
  }
  Time2Vec t;
  t.omega = store.add(name + ".omega", std::move(omega));
  t.phi = store.add(name + ".phi", std::move(phi));
  t.functions = functions;
  t.dim = dim;
  return t;
}

Var Time2Vec::operator()(const Graph& g, Var times, int v) const {
  Var w = ad::slice_rows(g.p(omega), v, 1);
  Var b = ad::slice_rows(g.p(phi), v, 1);
  Var lin = ad::add_row(ad::matmul(times, w), b);
  std::array<Var, 2> parts{ad::slice_cols(lin, 0, 1), ad::sin(ad::slice_cols(lin, 1, dim - 1))};
  return ad::concat_cols(parts);
}

RowVector time2vec(double t, const Matrix& omega, const Matrix& phi) {
  const auto V = omega.rows(), dim = omega.cols();
  RowVector out(V * dim);
  for (Eigen::Index v = 0; v < V; ++v) {
    out(v * dim) = omega(v, 0) * t + phi(v, 0);
    for (Eigen::Index k = 1; k < dim; ++k) out(v * dim + k) = std::sin(omega(v, k) * t + phi(v, k));
  }
  return out;
}

// ---------------------------------------------------------------------------

MTand MTand::create(ParameterStore& store, const std::string& name, Eigen::Index channels,
                    Eigen::Index width, int functions, int time_dim, bool channel_masked,
                    double time_scale, Rng& rng) {
  MTand m;
  m.time_embedding = Time2Vec::create(store, name + ".time2vec", functions, time_dim, rng);
  for (int h = 0; h < functions; ++h) {
    const auto head = name + ".head" + std::to_string(h);
    m.query.push_back(nn::Linear::create(store, head + ".query", time_dim, time_dim, rng));
    m.key.push_back(nn::Linear::create(store, head + ".key", time_dim, time_dim, rng, false));
  }
  m.channel_masked = channel_masked;
  m.time_scale = time_scale;
  Eigen::Index per_head = channels;
  if (!channel_masked) {
    m.value = nn::Linear::create(store, name + ".value", channels, width, rng);
    per_head = width;
  }
  m.output = nn::Linear::create(store, name + ".output", per_head * functions, width, rng);
  return m;
}

Var MTand::scores(const Graph& g, const ReferenceGrid& grid, Var key_times, int h) const {
  Matrix ref(grid.size(), 1);
  for (int a = 0; a < grid.size(); ++a) ref(a, 0) = grid.points[static_cast<std::size_t>(a)] / time_scale;
  Var q = query[static_cast<std::size_t>(h)](g, time_embedding(g, g.constant(std::move(ref)), h));
  Var k = key[static_cast<std::size_t>(h)](g, time_embedding(g, ad::scale(key_times, 1.0 / time_scale), h));
  return ad::scale(ad::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(time_embedding.dim)));
}

Var MTand::operator()(const Graph& g, const ReferenceGrid& grid, const Matrix& times,
                      const Matrix& values, const Matrix& mask) const {
  return (*this)(g, grid, g.constant(times), g.constant(values), mask);
}

Var MTand::operator()(const Graph& g, const ReferenceGrid& grid, Var times, Var values,
                      const Matrix& mask) const {
  if (times.rows() == 0)
    throw ValidationError(
        "mTAND interpolation needs at least one observation; use the imputation path instead");
  if (channel_masked && mask.sum() == 0.0)
    throw ValidationError(
        "mTAND interpolation needs at least one observed value; use the imputation path instead");
  std::vector<Var> heads_out;
  heads_out.reserve(query.size());
  Var projected = channel_masked ? values : value(g, values);
  for (int h = 0; h < heads(); ++h) {
    Var s = scores(g, grid, times, h);
    if (channel_masked) {
      heads_out.push_back(ad::masked_attention(s, projected, mask));
    } else {
      heads_out.push_back(ad::matmul(ad::softmax_rows(s), projected));
    }
  }
  return output(g, heads_out.size() == 1 ? heads_out[0] : ad::concat_cols(heads_out));
}

// ---------------------------------------------------------------------------

Gate Gate::create(ParameterStore& store, const std::string& name, Eigen::Index width, Rng& rng) {
  return Gate{nn::Mlp::create(store, name + ".mlp", 2 * width, width, width, rng)};
}

Var Gate::activations(const Graph& g, Var e_imp, Var e_mtand) const {
  std::array<Var, 2> both{e_imp, e_mtand};
  return ad::sigmoid(mlp(g, ad::concat_cols(both)));
}

Var Gate::operator()(const Graph& g, Var e_imp, Var e_mtand) const {
  if (e_imp.rows() != e_mtand.rows() || e_imp.cols() != e_mtand.cols())
    throw Error("gate: embedding shapes differ");
  Var gate = activations(g, e_imp, e_mtand);
  return ad::add(ad::mul(gate, e_imp), ad::mul(ad::one_minus(gate), e_mtand));
}

// ---------------------------------------------------------------------------

MitsEncoder MitsEncoder::create(ParameterStore& store, const std::string& name,
                                Eigen::Index variables, Eigen::Index width, int functions,
                                int time_dim, double window_hours, Rng& rng) {
  MitsEncoder e;
  e.conv = nn::Conv1d::create(store, name + ".conv", variables, width, rng);
  e.mtand = MTand::create(store, name + ".mtand", variables, width, functions, time_dim, true,
                          window_hours, rng);
  e.gate = Gate::create(store, name + ".gate", width, rng);
  return e;
}

Var MitsEncoder::operator()(const Graph& g, const ReferenceGrid& grid, const Matrix& imputed,
                            const IrregularSeries& obs) const {
  Var e_imp = conv(g, g.constant(imputed.transpose()));
  // Without any observation the imputation path carries the record alone.
  if (obs.count() == 0 || obs.mask.sum() == 0.0) return e_imp;
  Var e_mtand = mtand(g, grid, obs.times, obs.values, obs.mask);
  return gate(g, e_imp, e_mtand);
}

NoteEncoder NoteEncoder::create(ParameterStore& store, const std::string& name,
                                Eigen::Index note_dim, Eigen::Index width, int functions,
                                int time_dim, double window_hours, bool use_null_note, Rng& rng) {
  NoteEncoder e;
  e.mtand = MTand::create(store, name + ".mtand", note_dim, width, functions, time_dim, false,
                          window_hours, rng);
  e.use_null_note = use_null_note;
  if (use_null_note) e.null_note = store.add(name + ".null_note", init::normal(1, note_dim, 0.1, rng));
  return e;
}

Var NoteEncoder::operator()(const Graph& g, const ReferenceGrid& grid, const NoteSeries& notes) const {
  if (notes.count() == 0) {
    if (!use_null_note)
      throw ValidationError("admission has no notes; filter it or enable the null-note embedding");
    return mtand(g, grid, g.constant(Matrix::Zero(1, 1)), g.p(null_note), Matrix());
  }
  return mtand(g, grid, notes.times, notes.embeddings, Matrix());
}

}  // namespace ctpd::encoding
