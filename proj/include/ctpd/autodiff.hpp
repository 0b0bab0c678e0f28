#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Values are Eigen
// matrices; sequences are stored one step per row (T x D). Calling
// backward() sweeps the tape in reverse creation order, so the tape order is
// always a valid topological order.

#include "ctpd/parameters.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace ctpd::ad {

class Tape;

/// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

using Seed = std::pair<Var, Matrix>;

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self, const Matrix& grad_out)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Matrix value);
  /// Differentiable input that is not a stored parameter.
  Var leaf(Matrix value);
  /// Parameter node; repeated calls with the same id return the same node.
  Var param(const ParameterStore& store, ParamId id);

  Var record(Matrix value, bool needs_grad, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  const Matrix& value(std::uint32_t id) const { return nodes_[id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  bool has_grad(Var v) const { return nodes_[v.id()].has_grad; }
  /// Gradient of a node after backward(); zero matrix if nothing flowed in.
  Matrix grad(Var v) const;

  /// Adds `g` into the gradient of node `id` (no-op for constants).
  template <typename Expr>
  void add_grad(std::uint32_t id, const Expr& g) {
    auto& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.has_grad) {
      n.grad += g;
    } else {
      n.grad = g;
      n.has_grad = true;
    }
  }

  /// Seeds d(root)/d(root) = 1; root must be 1x1.
  void backward(Var root);
  void backward(std::span<const Seed> seeds);

  /// Adds parameter gradients into `out` (aligned with the bound store).
  void accumulate(Gradients& out) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    bool needs_grad = false;
    bool has_grad = false;
    std::int64_t param = -1;
  };

  std::vector<Node> nodes_;
  std::vector<std::int64_t> param_nodes_;
  const ParameterStore* store_ = nullptr;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

// ---- linear algebra -------------------------------------------------------
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

// ---- elementwise ------------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
/// Adds a 1 x C row to every row of a.
Var add_row(Var a, Var row);
/// Multiplies every row of a elementwise by a 1 x C row.
Var mul_row(Var a, Var row);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
/// Tanh approximation of GELU (smooth, so finite differences behave).
Var gelu(Var a);
Var sin(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softplus(Var a);

// ---- normalization and attention -------------------------------------------
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Per-column masked attention. scores: Q x N, values: N x C, mask: N x C
/// with entries in {0,1}. out(q, c) = sum_n w(q,n,c) values(n,c) where w is the
/// softmax of scores(q, .) restricted to keys with mask(n, c) = 1. Columns with
/// no unmasked key produce 0.
Var masked_attention(Var scores, Var values, const Matrix& mask);
/// Attention weights used by masked_attention for one column (Q x N; masked
/// entries are 0). Not differentiable.
Matrix masked_attention_weights(const Matrix& scores, const Matrix& mask, Eigen::Index column);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Divides each row by (its Euclidean norm + eps).
Var row_normalize(Var a, double eps = 1e-12);

// ---- shape ----------------------------------------------------------------
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// out(i, :) = a(i + offset, :) when in range, else 0.
Var shift_rows(Var a, Eigen::Index offset);
/// Reinterprets a in row-major order as r x c.
Var reshape(Var a, Eigen::Index r, Eigen::Index c);
/// Diagonal of a square matrix as an n x 1 column.
Var diagonal(Var a);

// ---- reductions ------------------------------------------------------------
Var mean_rows(Var a);  // 1 x C
Var sum_cols(Var a);   // R x 1 (sum of each row)
Var sum_all(Var a);    // 1 x 1
Var mean_all(Var a);   // 1 x 1
/// Non-overlapping mean pooling of consecutive rows; rows must divide evenly.
Var mean_pool_rows(Var a, Eigen::Index window);

// ---- pairwise batch helpers -------------------------------------------------
/// a: B1 x H, b: B2 x H -> (B1*B2) x H with row i*B2 + j = a(i) + b(j).
Var pairwise_add_rows(Var a, Var b);
/// a: (B1*K) x D, b: (B2*K) x D -> (B1*B2) x K with
/// out(i*B2 + j, k) = <a(i*K + k), b(j*K + k)>.
Var pairwise_slot_dot(Var a, Var b, Eigen::Index k);

// ---- losses ------------------------------------------------------------------
/// Mean logistic cross-entropy of logits against constant {0,1} labels of the
/// same shape. Positive terms are multiplied by pos_weight.
Var bce_with_logits(Var logits, const Matrix& labels, double pos_weight = 1.0);
/// Mean squared error against a constant target.
Var mse(Var a, const Matrix& target);

Var detach(Var a);

}  // namespace ctpd::ad
