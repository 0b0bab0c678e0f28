#pragma once

// Multi-scale time-series tokens and shared-prototype slot attention.

#include "ctpd/layers.hpp"

#include <array>

namespace ctpd::discovery {

using ad::Var;
using nn::Graph;

enum class Mode { train, eval };

/// Three parallel conv blocks over z_ts, mean-pooled with windows 1, 2 and 4
/// and concatenated along time (T + T/2 + T/4 tokens). A sinusoidal position
/// table running continuously over all tokens is added at the end.
struct MultiScale {
  static constexpr std::array<int, 3> kWindows{1, 2, 4};

  std::array<nn::Conv1d, 3> conv;

  static MultiScale create(ParameterStore& store, const std::string& name, Eigen::Index width,
                           Rng& rng);
  static Eigen::Index token_count(Eigen::Index T);
  Var operator()(const Graph& g, Var z_ts) const;
};

/// Position encoding over `tokens` rows added to z_ts when multi-scale is off.
Var add_positions(const Graph& g, Var tokens);

/// inverse of softplus, for initializing sigma to a given value
double inverse_softplus(double y);

struct PrototypeBank {
  ParamId mu;         // K x D
  ParamId sigma_raw;  // K x D, sigma = softplus(sigma_raw)
  int k = 0;

  static PrototypeBank create(ParameterStore& store, const std::string& name, int k,
                              Eigen::Index width, Rng& rng);
  /// mu + sigma * noise in train mode (noise is K x D standard normal), mu in eval.
  Var initial(const Graph& g, Mode mode, const Matrix& noise) const;
};

struct SlotAttention {
  nn::Linear query;  // g_q
  nn::Linear key;    // g_k
  nn::Linear value;  // v
  nn::GruCell cell;
  nn::Mlp refine;    // f(h) = h + refine(h)
  int iterations = 3;

  struct Result {
    Var prototypes;  // K x D
    Var weights;     // K x L, final iteration
  };

  static SlotAttention create(ParameterStore& store, const std::string& name, Eigen::Index width,
                              int iterations, Rng& rng);
  Result operator()(const Graph& g, Var init, Var inputs) const;
};

struct DiscoveryOutput {
  Var p_ts;
  Var p_text;
  Var w_ts;
  Var w_text;
};

/// Draws the K x D noise used by PrototypeBank::initial.
Matrix sample_noise(int k, Eigen::Index width, Rng& rng);

/// Both modalities start from the same initial prototypes and share the
/// slot-attention parameters.
DiscoveryOutput discover(const Graph& g, Var ts_tokens, Var text_tokens, const PrototypeBank& bank,
                         const SlotAttention& slots, Mode mode, const Matrix& noise);

}  // namespace ctpd::discovery
