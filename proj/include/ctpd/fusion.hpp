#pragma once

// Cross-modal token fusion, per-group attention pooling and the task head.

#include "ctpd/layers.hpp"

#include <array>
#include <vector>

namespace ctpd::fusion {

using ad::Var;
using nn::Graph;

enum TokenGroup { ts_prototype = 0, ts_timestamp = 1, text_prototype = 2, text_timestamp = 3 };
inline constexpr int kGroups = 4;

/// Token groups in encoder order; an invalid Var marks an absent group.
using GroupTokens = std::array<Var, kGroups>;

/// Adds a learned type embedding per group, then runs pre-norm encoder layers
/// with full self-attention over all tokens.
struct FusionEncoder {
  ParamId type_embeddings;  // 4 x D
  std::vector<nn::EncoderLayer> layers;

  static FusionEncoder create(ParameterStore& store, const std::string& name, Eigen::Index width,
                              int heads, int n_layers, Rng& rng);
  /// `expected` holds the required row count per group (0 = absent).
  GroupTokens operator()(const Graph& g, const GroupTokens& tokens,
                         const std::array<Eigen::Index, kGroups>& expected) const;
};

/// softmax over the group of w^T tanh(W x + b), then the weighted sum.
struct AttentionPool {
  nn::Linear proj;  // D -> D
  ParamId score;    // D x 1

  static AttentionPool create(ParameterStore& store, const std::string& name, Eigen::Index width,
                              Rng& rng);
  Var weights(const Graph& g, Var tokens) const;  // 1 x L
  Var operator()(const Graph& g, Var tokens) const;  // 1 x D
};

/// Pools each present group with its own scorer; F_ts and F_text are the sums
/// of their modality's pooled groups.
struct Pooling {
  std::array<AttentionPool, kGroups> pools;

  static Pooling create(ParameterStore& store, const std::string& name, Eigen::Index width,
                        Rng& rng);
  std::pair<Var, Var> operator()(const Graph& g, const GroupTokens& tokens) const;
};

/// Logits (1 x C) from concat[F_ts, F_text].
struct Head {
  nn::Mlp mlp;  // 2D -> D -> C

  static Head create(ParameterStore& store, const std::string& name, Eigen::Index width,
                     Eigen::Index classes, Rng& rng);
  Var operator()(const Graph& g, Var f_ts, Var f_text) const;
};

/// Logistic cross-entropy, averaged over labels. Labels must be 0 or 1.
Var prediction_loss(Var logits, const Matrix& labels, double pos_weight = 1.0);

}  // namespace ctpd::fusion
