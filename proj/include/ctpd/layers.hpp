#pragma once

// Building blocks shared by the encoders, discovery, decoders and fusion.
// Every block only stores ParamIds; values live in a ParameterStore and are
// bound to a tape through a Graph at forward time.

#include "ctpd/autodiff.hpp"
#include "ctpd/parameters.hpp"

#include <string>
#include <vector>

namespace ctpd::nn {

using ad::Var;

/// One forward pass: a tape plus the parameter snapshot it reads.
struct Graph {
  ad::Tape& tape;
  const ParameterStore& params;

  Var p(ParamId id) const { return tape.param(params, id); }
  Var constant(Matrix m) const { return tape.constant(std::move(m)); }
};

struct Linear {
  ParamId weight;  // in x out
  ParamId bias;    // 1 x out
  bool has_bias = true;
  Eigen::Index in = 0;
  Eigen::Index out = 0;

  static Linear create(ParameterStore& store, const std::string& name, Eigen::Index in,
                       Eigen::Index out, Rng& rng, bool bias = true);
  Var operator()(const Graph& g, Var x) const;
};

/// Two-layer perceptron with a GELU hidden layer.
struct Mlp {
  Linear hidden;
  Linear output;

  static Mlp create(ParameterStore& store, const std::string& name, Eigen::Index in,
                    Eigen::Index width, Eigen::Index out, Rng& rng);
  Var operator()(const Graph& g, Var x) const;
};

/// 1D convolution along rows, kernel 3, zero "same" padding.
/// Weight layout: rows [0,in) tap t-1, [in,2in) tap t, [2in,3in) tap t+1.
struct Conv1d {
  ParamId weight;  // 3*in x out
  ParamId bias;    // 1 x out
  Eigen::Index in = 0;
  Eigen::Index out = 0;

  static Conv1d create(ParameterStore& store, const std::string& name, Eigen::Index in,
                       Eigen::Index out, Rng& rng);
  Var operator()(const Graph& g, Var x) const;
};

struct LayerNorm {
  ParamId gain;
  ParamId bias;

  static LayerNorm create(ParameterStore& store, const std::string& name, Eigen::Index width);
  Var operator()(const Graph& g, Var x) const;
};

struct MultiHeadAttention {
  Linear query;
  Linear key;
  Linear value;
  Linear output;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name,
                                   Eigen::Index width, int heads, Rng& rng);
  Var operator()(const Graph& g, Var queries, Var memory) const;
};

/// Pre-norm transformer encoder layer with a 4x feed-forward block.
struct EncoderLayer {
  LayerNorm norm_attn;
  MultiHeadAttention attn;
  LayerNorm norm_ff;
  Linear ff_in;
  Linear ff_out;

  static EncoderLayer create(ParameterStore& store, const std::string& name, Eigen::Index width,
                             int heads, Eigen::Index ff_width, Rng& rng);
  Var operator()(const Graph& g, Var x) const;
};

/// Pre-norm transformer decoder layer: self-attention, cross-attention to a
/// memory, feed-forward.
struct DecoderLayer {
  LayerNorm norm_self;
  MultiHeadAttention self_attn;
  LayerNorm norm_cross;
  MultiHeadAttention cross_attn;
  LayerNorm norm_ff;
  Linear ff_in;
  Linear ff_out;

  static DecoderLayer create(ParameterStore& store, const std::string& name, Eigen::Index width,
                             int heads, Eigen::Index ff_width, Rng& rng);
  Var operator()(const Graph& g, Var x, Var memory) const;
};

/// Gated recurrent unit with fused gate weights (reset, update, candidate).
struct GruCell {
  ParamId w_input;   // in x 3h
  ParamId b_input;   // 1 x 3h
  ParamId w_hidden;  // h x 3h
  ParamId b_hidden;  // 1 x 3h
  Eigen::Index hidden = 0;

  static GruCell create(ParameterStore& store, const std::string& name, Eigen::Index in,
                        Eigen::Index hidden, Rng& rng);
  /// input: N x in, state: N x hidden -> new state N x hidden.
  Var operator()(const Graph& g, Var input, Var state) const;
};

/// Sinusoidal position table (rows = positions).
Matrix sinusoidal_positions(Eigen::Index positions, Eigen::Index width);

}  // namespace ctpd::nn
