#pragma once

// Prototype-level contrastive alignment, reconstruction decoders and the
// weighted training objective.

#include "ctpd/layers.hpp"

#include <vector>

namespace ctpd::objectives {

using ad::Var;
using nn::Graph;

enum class Reduction { mean, sum };

/// beta(i, j) = softmax(MLP([g_ts_i, g_text_j])) over the K prototypes. The
/// first layer is split per modality so all B*B pairs share two projections.
struct SlotImportance {
  nn::Linear ts_in;    // D -> H, with bias
  nn::Linear text_in;  // D -> H, no bias
  nn::Linear out;      // H -> K

  static SlotImportance create(ParameterStore& store, const std::string& name, Eigen::Index width,
                               Eigen::Index hidden, int k, Rng& rng);
  /// g_ts: B1 x D, g_text: B2 x D -> (B1*B2) x K, row i*B2 + j.
  Var operator()(const Graph& g, Var g_ts, Var g_text) const;
};

/// sim(i, j) = sum_k beta(i*B+j, k) cos(P_ts_i(k), P_text_j(k)).
/// p_ts, p_text: (B*K) x D stacked banks; beta: (B*B) x K. Returns B x B.
Var pair_similarities(Var p_ts, Var p_text, Var beta, Eigen::Index k);

struct TpnceConfig {
  double temperature = 0.1;
  Reduction reduction = Reduction::mean;
  /// false: every pair in row i reuses beta of the matched pair (i, i)
  bool per_pair_beta = true;
};

/// Bidirectional loss: the average of the TS->text and text->TS directions.
Var tpnce_loss(const Graph& g, Var p_ts, Var p_text, Var g_ts, Var g_text,
               const SlotImportance& importance, const TpnceConfig& config, Eigen::Index k);

/// Learned T positional queries, pre-norm decoder layers cross-attending to
/// the prototypes and a linear output head.
struct ReconDecoder {
  ParamId queries;  // T x D
  std::vector<nn::DecoderLayer> layers;
  nn::LayerNorm final_norm;
  nn::Linear head;

  static ReconDecoder create(ParameterStore& store, const std::string& name, Eigen::Index T,
                             Eigen::Index width, int heads, Eigen::Index out_dim, int n_layers,
                             Rng& rng);
  /// prototypes: K x D -> T x out_dim
  Var operator()(const Graph& g, Var prototypes) const;
};

struct LossBundle {
  double pred = 0.0;
  double tpnce = 0.0;
  double recon_ts = 0.0;
  double recon_text = 0.0;
  double recon = 0.0;
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

/// total = pred + lambda1 * tpnce + lambda2 * (recon_ts + recon_text) / 2.
/// Throws NumericError naming the first non-finite component.
LossBundle total_loss(double pred, double tpnce, double recon_ts, double recon_text, double lambda1,
                      double lambda2);

}  // namespace ctpd::objectives
