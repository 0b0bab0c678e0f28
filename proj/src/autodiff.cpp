#include "ctpd/autodiff.hpp"

#include "ctpd/error.hpp"

#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>

namespace ctpd::ad {

Tape::Tape() { nodes_.reserve(1024); }

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::leaf(Matrix value) { return record(std::move(value), true, nullptr); }

Var Tape::param(const ParameterStore& store, ParamId id) {
  if (store_ == nullptr) {
    store_ = &store;
  } else if (store_ != &store) {
    throw Error("a tape can only bind parameters of a single store");
  }
  if (param_nodes_.size() < store.size()) param_nodes_.resize(store.size(), -1);
  auto& slot = param_nodes_[id.index];
  if (slot >= 0) return Var(this, static_cast<std::uint32_t>(slot));
  Var v = record(store.value(id), true, nullptr);
  nodes_[v.id()].param = id.index;
  slot = v.id();
  return v;
}

Var Tape::record(Matrix value, bool needs_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Matrix Tape::grad(Var v) const {
  const auto& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) throw Error("backward root must be a scalar");
  Seed seed{root, Matrix::Ones(1, 1)};
  backward(std::span<const Seed>(&seed, 1));
}

void Tape::backward(std::span<const Seed> seeds) {
  std::uint32_t last = 0;
  for (const auto& [v, g] : seeds) {
    assert(v.tape() == this);
    if (g.rows() != v.rows() || g.cols() != v.cols()) throw Error("seed shape mismatch");
    add_grad(v.id(), g);
    last = std::max(last, v.id());
  }
  for (std::int64_t i = last; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.has_grad || !n.backward) continue;
    // The closure may append to other nodes' gradients but never to its own.
    const Matrix g = n.grad;
    n.backward(*this, static_cast<std::uint32_t>(i), g);
  }
}

void Tape::accumulate(Gradients& out) const {
  for (std::size_t p = 0; p < param_nodes_.size(); ++p) {
    const auto id = param_nodes_[p];
    if (id < 0) continue;
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.has_grad) out[ParamId{static_cast<std::uint32_t>(p)}] += n.grad;
  }
}

namespace {

Tape& tape_of(Var a) {
  assert(a.valid());
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error("operands live on different tapes");
  return *a.tape();
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
  }
}

double softplus_scalar(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = tape_of(a);
  Matrix out = a.value().unaryExpr(fwd);
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, deriv](Tape& t, std::uint32_t self, const Matrix& g) {
                    const Matrix& x = t.value(ia);
                    const Matrix& y = t.value(self);
                    Matrix d(x.rows(), x.cols());
                    for (Eigen::Index k = 0; k < x.size(); ++k) d(k) = deriv(x(k), y(k));
                    t.add_grad(ia, g.cwiseProduct(d));
                  });
}

Matrix row_softmax(const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.row(r).maxCoeff();
    out.row(r) = (a.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& t, std::uint32_t, const Matrix& g) {
                    if (t.needs_grad(ia)) t.add_grad(ia, g * t.value(ib).transpose());
                    if (t.needs_grad(ib)) t.add_grad(ib, t.value(ia).transpose() * g);
                  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) throw Error("matmul_nt: inner dimension mismatch");
  Matrix out = a.value() * b.value().transpose();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& t, std::uint32_t, const Matrix& g) {
                    if (t.needs_grad(ia)) t.add_grad(ia, g * t.value(ib));
                    if (t.needs_grad(ib)) t.add_grad(ib, g.transpose() * t.value(ia));
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  Matrix out = a.value().transpose();
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia](Tape& t, std::uint32_t, const Matrix& g) { t.add_grad(ia, g.transpose()); });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& t, std::uint32_t, const Matrix& g) {
                    t.add_grad(ia, g);
                    t.add_grad(ib, g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& t, std::uint32_t, const Matrix& g) {
                    t.add_grad(ia, g);
                    if (t.needs_grad(ib)) t.add_grad(ib, -g);
                  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& t, std::uint32_t, const Matrix& g) {
                    if (t.needs_grad(ia)) t.add_grad(ia, g.cwiseProduct(t.value(ib)));
                    if (t.needs_grad(ib)) t.add_grad(ib, g.cwiseProduct(t.value(ia)));
                  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "div");
  Matrix out = a.value().cwiseQuotient(b.value());
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib](Tape& t, std::uint32_t self, const Matrix& g) {
                    const Matrix& bv = t.value(ib);
                    if (t.needs_grad(ia)) t.add_grad(ia, g.cwiseQuotient(bv));
                    if (t.needs_grad(ib))
                      t.add_grad(ib, -g.cwiseProduct(t.value(self)).cwiseQuotient(bv));
                  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error("add_row: row shape mismatch");
  Matrix out = a.value().rowwise() + row.value().row(0);
  const auto ia = a.id(), ir = row.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(row),
                  [ia, ir](Tape& t, std::uint32_t, const Matrix& g) {
                    t.add_grad(ia, g);
                    if (t.needs_grad(ir)) t.add_grad(ir, g.colwise().sum());
                  });
}

Var mul_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw Error("mul_row: row shape mismatch");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  const auto ia = a.id(), ir = row.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(row),
                  [ia, ir](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& r = t.value(ir);
                    if (t.needs_grad(ia))
                      t.add_grad(ia, (g.array().rowwise() * r.row(0).array()).matrix());
                    if (t.needs_grad(ir))
                      t.add_grad(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
                  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value() * s;
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, s](Tape& t, std::uint32_t, const Matrix& g) { t.add_grad(ia, g * s); });
}

Var add_scalar(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value().array() + s;
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia](Tape& t, std::uint32_t, const Matrix& g) { t.add_grad(ia, g); });
}

Var one_minus(Var a) { return add_scalar(scale(a, -1.0), 1.0); }

Var sigmoid(Var a) {
  return unary(a, [](double x) { return sigmoid_scalar(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var gelu(Var a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return unary(
      a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x))); },
      [](double x, double) {
        const double u = c * (x + 0.044715 * x * x * x);
        const double th = std::tanh(u);
        const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
      });
}

Var sin(Var a) {
  return unary(a, [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return softplus_scalar(x); },
               [](double x, double) { return sigmoid_scalar(x); });
}

// ---------------------------------------------------------------------------

Var softmax_rows(Var a) {
  Tape& t = tape_of(a);
  Matrix out = row_softmax(a.value());
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia](Tape& t, std::uint32_t self, const Matrix& g) {
                    const Matrix& y = t.value(self);
                    Vector dot = g.cwiseProduct(y).rowwise().sum();
                    t.add_grad(ia, y.cwiseProduct(g - dot.replicate(1, g.cols())));
                  });
}

Var log_softmax_rows(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    const double lse = m + std::log((x.row(r).array() - m).exp().sum());
    out.row(r) = x.row(r).array() - lse;
  }
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia](Tape& t, std::uint32_t self, const Matrix& g) {
                    Matrix p = t.value(self).array().exp();
                    Vector gs = g.rowwise().sum();
                    t.add_grad(ia, g - p.cwiseProduct(gs.replicate(1, g.cols())));
                  });
}

namespace {

// Indices of unmasked keys for every column.
std::vector<std::vector<Eigen::Index>> column_keys(const Matrix& mask) {
  std::vector<std::vector<Eigen::Index>> keys(static_cast<std::size_t>(mask.cols()));
  for (Eigen::Index c = 0; c < mask.cols(); ++c)
    for (Eigen::Index n = 0; n < mask.rows(); ++n)
      if (mask(n, c) != 0.0) keys[static_cast<std::size_t>(c)].push_back(n);
  return keys;
}

// Softmax of scores(q, keys) into w.
void masked_row_softmax(const Matrix& scores, Eigen::Index q, const std::vector<Eigen::Index>& keys,
                        std::vector<double>& w) {
  w.resize(keys.size());
  double m = -std::numeric_limits<double>::infinity();
  for (auto n : keys) m = std::max(m, scores(q, n));
  double z = 0.0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    w[i] = std::exp(scores(q, keys[i]) - m);
    z += w[i];
  }
  for (auto& x : w) x /= z;
}

}  // namespace

Matrix masked_attention_weights(const Matrix& scores, const Matrix& mask, Eigen::Index column) {
  Matrix w = Matrix::Zero(scores.rows(), scores.cols());
  std::vector<Eigen::Index> keys;
  for (Eigen::Index n = 0; n < mask.rows(); ++n)
    if (mask(n, column) != 0.0) keys.push_back(n);
  if (keys.empty()) return w;
  std::vector<double> row;
  for (Eigen::Index q = 0; q < scores.rows(); ++q) {
    masked_row_softmax(scores, q, keys, row);
    for (std::size_t i = 0; i < keys.size(); ++i) w(q, keys[i]) = row[i];
  }
  return w;
}

Var masked_attention(Var scores, Var values, const Matrix& mask) {
  Tape& t = tape_of(scores, values);
  if (scores.cols() != values.rows()) throw Error("masked_attention: key count mismatch");
  if (mask.rows() != values.rows() || mask.cols() != values.cols())
    throw Error("masked_attention: mask shape mismatch");
  const Matrix& s = scores.value();
  const Matrix& x = values.value();
  auto keys = column_keys(mask);
  Matrix out = Matrix::Zero(s.rows(), x.cols());
  std::vector<double> w;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const auto& kc = keys[static_cast<std::size_t>(c)];
    if (kc.empty()) continue;
    for (Eigen::Index q = 0; q < s.rows(); ++q) {
      masked_row_softmax(s, q, kc, w);
      double acc = 0.0;
      for (std::size_t i = 0; i < kc.size(); ++i) acc += w[i] * x(kc[i], c);
      out(q, c) = acc;
    }
  }
  const auto is = scores.id(), ix = values.id();
  return t.record(
      std::move(out), t.needs_grad(scores) || t.needs_grad(values),
      [is, ix, keys = std::move(keys)](Tape& t, std::uint32_t self, const Matrix& g) {
        const Matrix& s = t.value(is);
        const Matrix& x = t.value(ix);
        const Matrix& y = t.value(self);
        Matrix ds = Matrix::Zero(s.rows(), s.cols());
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        std::vector<double> w;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
          const auto& kc = keys[static_cast<std::size_t>(c)];
          if (kc.empty()) continue;
          for (Eigen::Index q = 0; q < s.rows(); ++q) {
            const double gq = g(q, c);
            if (gq == 0.0) continue;
            masked_row_softmax(s, q, kc, w);
            for (std::size_t i = 0; i < kc.size(); ++i) {
              const auto n = kc[i];
              dx(n, c) += gq * w[i];
              ds(q, n) += gq * w[i] * (x(n, c) - y(q, c));
            }
          }
        }
        t.add_grad(is, ds);
        t.add_grad(ix, dx);
      });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x, gain);
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
    throw Error("layer_norm: parameter shape mismatch");
  const Matrix& xv = x.value();
  const auto n = static_cast<double>(xv.cols());
  Matrix xhat(xv.rows(), xv.cols());
  Vector inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
               bias.value().row(0).array();
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return t.record(std::move(out), t.needs_grad(x) || t.needs_grad(gain) || t.needs_grad(bias),
                  [ix, ig, ib, xhat = std::move(xhat), inv_std, n](Tape& t, std::uint32_t,
                                                                  const Matrix& g) {
                    if (t.needs_grad(ig)) t.add_grad(ig, g.cwiseProduct(xhat).colwise().sum());
                    if (t.needs_grad(ib)) t.add_grad(ib, g.colwise().sum());
                    if (!t.needs_grad(ix)) return;
                    Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
                    Matrix dx(g.rows(), g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      const double m1 = dxhat.row(r).sum() / n;
                      const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                      dx.row(r) = inv_std(r) *
                                  (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                    }
                    t.add_grad(ix, dx);
                  });
}

Var row_normalize(Var a, double eps) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  Vector norms = x.rowwise().norm();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = x.row(r) / (norms(r) + eps);
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, norms, eps](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& x = t.value(ia);
                    Matrix dx(x.rows(), x.cols());
                    for (Eigen::Index r = 0; r < x.rows(); ++r) {
                      const double n = norms(r);
                      const double d = n + eps;
                      dx.row(r) = g.row(r) / d;
                      if (n > 0.0) dx.row(r) -= x.row(r) * (g.row(r).dot(x.row(r)) / (n * d * d));
                    }
                    t.add_grad(ia, dx);
                  });
}

// ---------------------------------------------------------------------------

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  Tape& t = tape_of(parts[0]);
  Eigen::Index rows = 0;
  const auto cols = parts[0].cols();
  bool needs = false;
  for (auto p : parts) {
    if (p.tape() != &t) throw Error("concat_rows: operands live on different tapes");
    if (p.cols() != cols) throw Error("concat_rows: column mismatch");
    rows += p.rows();
    needs = needs || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::uint32_t, Eigen::Index>> layout;
  Eigen::Index r = 0;
  for (auto p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    layout.emplace_back(p.id(), p.rows());
    r += p.rows();
  }
  return t.record(std::move(out), needs,
                  [layout = std::move(layout)](Tape& t, std::uint32_t, const Matrix& g) {
                    Eigen::Index r = 0;
                    for (auto [id, n] : layout) {
                      t.add_grad(id, g.middleRows(r, n));
                      r += n;
                    }
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  Eigen::Index cols = 0;
  const auto rows = parts[0].rows();
  bool needs = false;
  for (auto p : parts) {
    if (p.tape() != &t) throw Error("concat_cols: operands live on different tapes");
    if (p.rows() != rows) throw Error("concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || t.needs_grad(p);
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::uint32_t, Eigen::Index>> layout;
  Eigen::Index c = 0;
  for (auto p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    layout.emplace_back(p.id(), p.cols());
    c += p.cols();
  }
  return t.record(std::move(out), needs,
                  [layout = std::move(layout)](Tape& t, std::uint32_t, const Matrix& g) {
                    Eigen::Index c = 0;
                    for (auto [id, n] : layout) {
                      t.add_grad(id, g.middleCols(c, n));
                      c += n;
                    }
                  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) throw Error("slice_rows: out of range");
  Matrix out = a.value().middleRows(start, count);
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, start, count](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& x = t.value(ia);
                    Matrix d = Matrix::Zero(x.rows(), x.cols());
                    d.middleRows(start, count) = g;
                    t.add_grad(ia, d);
                  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.cols()) throw Error("slice_cols: out of range");
  Matrix out = a.value().middleCols(start, count);
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, start, count](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& x = t.value(ia);
                    Matrix d = Matrix::Zero(x.rows(), x.cols());
                    d.middleCols(start, count) = g;
                    t.add_grad(ia, d);
                  });
}

Var shift_rows(Var a, Eigen::Index offset) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  const auto n = x.rows();
  Matrix out = Matrix::Zero(n, x.cols());
  // out(i) = x(i + offset) for i in [lo, hi)
  const auto lo = std::max<Eigen::Index>(0, -offset);
  const auto hi = std::min<Eigen::Index>(n, n - offset);
  if (hi > lo) out.middleRows(lo, hi - lo) = x.middleRows(lo + offset, hi - lo);
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, offset, lo, hi](Tape& t, std::uint32_t, const Matrix& g) {
                    Matrix d = Matrix::Zero(g.rows(), g.cols());
                    if (hi > lo) d.middleRows(lo + offset, hi - lo) = g.middleRows(lo, hi - lo);
                    t.add_grad(ia, d);
                  });
}

Var reshape(Var a, Eigen::Index r, Eigen::Index c) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (r * c != x.size()) throw Error("reshape: element count mismatch");
  Matrix out(r, c);
  const auto src_cols = x.cols();
  for (Eigen::Index f = 0; f < x.size(); ++f) out(f / c, f % c) = x(f / src_cols, f % src_cols);
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, c, src_cols](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& x = t.value(ia);
                    Matrix d(x.rows(), x.cols());
                    for (Eigen::Index f = 0; f < x.size(); ++f)
                      d(f / src_cols, f % src_cols) = g(f / c, f % c);
                    t.add_grad(ia, d);
                  });
}

Var diagonal(Var a) {
  Tape& t = tape_of(a);
  if (a.rows() != a.cols()) throw Error("diagonal: matrix is not square");
  Matrix out = a.value().diagonal();
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia](Tape& t, std::uint32_t, const Matrix& g) {
                    const auto n = g.rows();
                    Matrix d = Matrix::Zero(n, n);
                    d.diagonal() = g.col(0);
                    t.add_grad(ia, d);
                  });
}

// ---------------------------------------------------------------------------

Var mean_rows(Var a) {
  Tape& t = tape_of(a);
  const auto n = a.rows();
  Matrix out = a.value().colwise().mean();
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, n](Tape& t, std::uint32_t, const Matrix& g) {
                    t.add_grad(ia, g.replicate(n, 1) / static_cast<double>(n));
                  });
}

Var sum_cols(Var a) {
  Tape& t = tape_of(a);
  const auto c = a.cols();
  Matrix out = a.value().rowwise().sum();
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, c](Tape& t, std::uint32_t, const Matrix& g) {
                    t.add_grad(ia, g.replicate(1, c));
                  });
}

Var sum_all(Var a) {
  Tape& t = tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& x = t.value(ia);
                    t.add_grad(ia, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
                  });
}

Var mean_all(Var a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var mean_pool_rows(Var a, Eigen::Index window) {
  Tape& t = tape_of(a);
  if (window < 1 || a.rows() % window != 0) throw Error("mean_pool_rows: rows not divisible by window");
  const Matrix& x = a.value();
  const auto out_rows = x.rows() / window;
  Matrix out(out_rows, x.cols());
  for (Eigen::Index r = 0; r < out_rows; ++r)
    out.row(r) = x.middleRows(r * window, window).colwise().mean();
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, window](Tape& t, std::uint32_t, const Matrix& g) {
                    Matrix d(g.rows() * window, g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r)
                      d.middleRows(r * window, window) =
                          g.row(r).replicate(window, 1) / static_cast<double>(window);
                    t.add_grad(ia, d);
                  });
}

// ---------------------------------------------------------------------------

Var pairwise_add_rows(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols()) throw Error("pairwise_add_rows: column mismatch");
  const auto n1 = a.rows(), n2 = b.rows();
  Matrix out(n1 * n2, a.cols());
  for (Eigen::Index i = 0; i < n1; ++i)
    for (Eigen::Index j = 0; j < n2; ++j) out.row(i * n2 + j) = a.value().row(i) + b.value().row(j);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib, n1, n2](Tape& t, std::uint32_t, const Matrix& g) {
                    Matrix da = Matrix::Zero(n1, g.cols());
                    Matrix db = Matrix::Zero(n2, g.cols());
                    for (Eigen::Index i = 0; i < n1; ++i)
                      for (Eigen::Index j = 0; j < n2; ++j) {
                        da.row(i) += g.row(i * n2 + j);
                        db.row(j) += g.row(i * n2 + j);
                      }
                    t.add_grad(ia, da);
                    t.add_grad(ib, db);
                  });
}

namespace {

Matrix gather_slot(const Matrix& m, Eigen::Index k, Eigen::Index slots) {
  const auto n = m.rows() / slots;
  Matrix out(n, m.cols());
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = m.row(i * slots + k);
  return out;
}

}  // namespace

Var pairwise_slot_dot(Var a, Var b, Eigen::Index k) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.cols() || a.rows() % k != 0 || b.rows() % k != 0)
    throw Error("pairwise_slot_dot: shape mismatch");
  const auto n1 = a.rows() / k, n2 = b.rows() / k;
  Matrix out(n1 * n2, k);
  for (Eigen::Index s = 0; s < k; ++s) {
    Matrix prod = gather_slot(a.value(), s, k) * gather_slot(b.value(), s, k).transpose();
    for (Eigen::Index i = 0; i < n1; ++i)
      for (Eigen::Index j = 0; j < n2; ++j) out(i * n2 + j, s) = prod(i, j);
  }
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), t.needs_grad(a) || t.needs_grad(b),
                  [ia, ib, n1, n2, k](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& av = t.value(ia);
                    const Matrix& bv = t.value(ib);
                    Matrix da = Matrix::Zero(av.rows(), av.cols());
                    Matrix db = Matrix::Zero(bv.rows(), bv.cols());
                    for (Eigen::Index s = 0; s < k; ++s) {
                      Matrix gs(n1, n2);
                      for (Eigen::Index i = 0; i < n1; ++i)
                        for (Eigen::Index j = 0; j < n2; ++j) gs(i, j) = g(i * n2 + j, s);
                      Matrix as = gather_slot(av, s, k);
                      Matrix bs = gather_slot(bv, s, k);
                      Matrix das = gs * bs;
                      Matrix dbs = gs.transpose() * as;
                      for (Eigen::Index i = 0; i < n1; ++i) da.row(i * k + s) += das.row(i);
                      for (Eigen::Index j = 0; j < n2; ++j) db.row(j * k + s) += dbs.row(j);
                    }
                    t.add_grad(ia, da);
                    t.add_grad(ib, db);
                  });
}

// ---------------------------------------------------------------------------

Var bce_with_logits(Var logits, const Matrix& labels, double pos_weight) {
  Tape& t = tape_of(logits);
  const Matrix& x = logits.value();
  if (labels.rows() != x.rows() || labels.cols() != x.cols())
    throw Error("bce_with_logits: label shape mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double y = labels(i);
    total += pos_weight * y * softplus_scalar(-x(i)) + (1.0 - y) * softplus_scalar(x(i));
  }
  const auto n = static_cast<double>(x.size());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  const auto il = logits.id();
  return t.record(std::move(out), t.needs_grad(logits),
                  [il, labels, pos_weight, n](Tape& t, std::uint32_t, const Matrix& g) {
                    const Matrix& x = t.value(il);
                    Matrix d(x.rows(), x.cols());
                    for (Eigen::Index i = 0; i < x.size(); ++i) {
                      const double y = labels(i);
                      d(i) = (-pos_weight * y * sigmoid_scalar(-x(i)) +
                              (1.0 - y) * sigmoid_scalar(x(i))) *
                             g(0, 0) / n;
                    }
                    t.add_grad(il, d);
                  });
}

Var mse(Var a, const Matrix& target) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (target.rows() != x.rows() || target.cols() != x.cols())
    throw Error("mse: target shape mismatch");
  Matrix diff = x - target;
  const auto n = static_cast<double>(x.size());
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  const auto ia = a.id();
  return t.record(std::move(out), t.needs_grad(a),
                  [ia, diff = std::move(diff), n](Tape& t, std::uint32_t, const Matrix& g) {
                    t.add_grad(ia, diff * (2.0 * g(0, 0) / n));
                  });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

}  // namespace ctpd::ad
