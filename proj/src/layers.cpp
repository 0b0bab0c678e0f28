#include "ctpd/layers.hpp"

#include "ctpd/error.hpp"

#include <array>
#include <cmath>

namespace ctpd::nn {

Linear Linear::create(ParameterStore& store, const std::string& name, Eigen::Index in,
                      Eigen::Index out, Rng& rng, bool bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.has_bias = bias;
  l.weight = store.add(name + ".weight", init::xavier(in, out, rng));
  if (bias) l.bias = store.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(const Graph& g, Var x) const {
  Var y = ad::matmul(x, g.p(weight));
  return has_bias ? ad::add_row(y, g.p(bias)) : y;
}

Mlp Mlp::create(ParameterStore& store, const std::string& name, Eigen::Index in,
                Eigen::Index width, Eigen::Index out, Rng& rng) {
  return Mlp{Linear::create(store, name + ".hidden", in, width, rng),
             Linear::create(store, name + ".output", width, out, rng)};
}

Var Mlp::operator()(const Graph& g, Var x) const { return output(g, ad::gelu(hidden(g, x))); }

Conv1d Conv1d::create(ParameterStore& store, const std::string& name, Eigen::Index in,
                      Eigen::Index out, Rng& rng) {
  Conv1d c;
  c.in = in;
  c.out = out;
  // fan-in covers all three taps
  const double a = std::sqrt(6.0 / static_cast<double>(3 * in + out));
  c.weight = store.add(name + ".weight", init::uniform(3 * in, out, -a, a, rng));
  c.bias = store.add(name + ".bias", Matrix::Zero(1, out));
  return c;
}

Var Conv1d::operator()(const Graph& g, Var x) const {
  if (x.cols() != in) throw Error("conv1d: expected " + std::to_string(in) + " channels");
  std::array<Var, 3> taps{ad::shift_rows(x, -1), x, ad::shift_rows(x, 1)};
  Var stacked = ad::concat_cols(taps);
  return ad::add_row(ad::matmul(stacked, g.p(weight)), g.p(bias));
}

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, Eigen::Index width) {
  return LayerNorm{store.add(name + ".gain", Matrix::Ones(1, width)),
                   store.add(name + ".bias", Matrix::Zero(1, width))};
}

Var LayerNorm::operator()(const Graph& g, Var x) const {
  return ad::layer_norm(x, g.p(gain), g.p(bias));
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name,
                                              Eigen::Index width, int heads, Rng& rng) {
  if (heads < 1 || width % heads != 0)
    throw ConfigError("attention width " + std::to_string(width) + " not divisible by " +
                      std::to_string(heads) + " heads");
  MultiHeadAttention m;
  m.query = Linear::create(store, name + ".query", width, width, rng);
  // a key bias adds the same amount to every score of a query
  m.key = Linear::create(store, name + ".key", width, width, rng, false);
  m.value = Linear::create(store, name + ".value", width, width, rng);
  m.output = Linear::create(store, name + ".output", width, width, rng);
  m.heads = heads;
  return m;
}

Var MultiHeadAttention::operator()(const Graph& g, Var queries, Var memory) const {
  Var q = query(g, queries);
  Var k = key(g, memory);
  Var v = value(g, memory);
  const auto width = q.cols();
  const auto dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> per_head;
  per_head.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice_cols(q, h * dh, dh);
    Var kh = ad::slice_cols(k, h * dh, dh);
    Var vh = ad::slice_cols(v, h * dh, dh);
    Var w = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
    per_head.push_back(ad::matmul(w, vh));
  }
  Var merged = heads == 1 ? per_head[0] : ad::concat_cols(per_head);
  return output(g, merged);
}

EncoderLayer EncoderLayer::create(ParameterStore& store, const std::string& name,
                                  Eigen::Index width, int heads, Eigen::Index ff_width, Rng& rng) {
  EncoderLayer e;
  e.norm_attn = LayerNorm::create(store, name + ".norm_attn", width);
  e.attn = MultiHeadAttention::create(store, name + ".attn", width, heads, rng);
  e.norm_ff = LayerNorm::create(store, name + ".norm_ff", width);
  e.ff_in = Linear::create(store, name + ".ff_in", width, ff_width, rng);
  e.ff_out = Linear::create(store, name + ".ff_out", ff_width, width, rng);
  return e;
}

Var EncoderLayer::operator()(const Graph& g, Var x) const {
  Var h = norm_attn(g, x);
  x = ad::add(x, attn(g, h, h));
  Var f = ff_out(g, ad::gelu(ff_in(g, norm_ff(g, x))));
  return ad::add(x, f);
}

DecoderLayer DecoderLayer::create(ParameterStore& store, const std::string& name,
                                  Eigen::Index width, int heads, Eigen::Index ff_width, Rng& rng) {
  DecoderLayer d;
  d.norm_self = LayerNorm::create(store, name + ".norm_self", width);
  d.self_attn = MultiHeadAttention::create(store, name + ".self_attn", width, heads, rng);
  d.norm_cross = LayerNorm::create(store, name + ".norm_cross", width);
  d.cross_attn = MultiHeadAttention::create(store, name + ".cross_attn", width, heads, rng);
  d.norm_ff = LayerNorm::create(store, name + ".norm_ff", width);
  d.ff_in = Linear::create(store, name + ".ff_in", width, ff_width, rng);
  d.ff_out = Linear::create(store, name + ".ff_out", ff_width, width, rng);
  return d;
}

Var DecoderLayer::operator()(const Graph& g, Var x, Var memory) const {
  Var h = norm_self(g, x);
  x = ad::add(x, self_attn(g, h, h));
  x = ad::add(x, cross_attn(g, norm_cross(g, x), memory));
  Var f = ff_out(g, ad::gelu(ff_in(g, norm_ff(g, x))));
  return ad::add(x, f);
}

GruCell GruCell::create(ParameterStore& store, const std::string& name, Eigen::Index in,
                        Eigen::Index hidden, Rng& rng) {
  GruCell c;
  c.hidden = hidden;
  c.w_input = store.add(name + ".w_input", init::xavier(in, 3 * hidden, rng));
  c.b_input = store.add(name + ".b_input", Matrix::Zero(1, 3 * hidden));
  c.w_hidden = store.add(name + ".w_hidden", init::xavier(hidden, 3 * hidden, rng));
  c.b_hidden = store.add(name + ".b_hidden", Matrix::Zero(1, 3 * hidden));
  return c;
}

Var GruCell::operator()(const Graph& g, Var input, Var state) const {
  const auto h = hidden;
  Var gi = ad::add_row(ad::matmul(input, g.p(w_input)), g.p(b_input));
  Var gh = ad::add_row(ad::matmul(state, g.p(w_hidden)), g.p(b_hidden));
  Var reset = ad::sigmoid(ad::add(ad::slice_cols(gi, 0, h), ad::slice_cols(gh, 0, h)));
  Var update = ad::sigmoid(ad::add(ad::slice_cols(gi, h, h), ad::slice_cols(gh, h, h)));
  Var candidate =
      ad::tanh(ad::add(ad::slice_cols(gi, 2 * h, h), ad::mul(reset, ad::slice_cols(gh, 2 * h, h))));
  return ad::add(ad::mul(ad::one_minus(update), candidate), ad::mul(update, state));
}

Matrix sinusoidal_positions(Eigen::Index positions, Eigen::Index width) {
  Matrix pe(positions, width);
  for (Eigen::Index p = 0; p < positions; ++p) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(p) * rate;
      pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

}  // namespace ctpd::nn
