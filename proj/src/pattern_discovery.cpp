#include "ctpd/pattern_discovery.hpp"

#include "ctpd/error.hpp"

#include <cmath>

namespace ctpd::discovery {

MultiScale MultiScale::create(ParameterStore& store, const std::string& name, Eigen::Index width,
                              Rng& rng) {
  MultiScale m;
  for (std::size_t s = 0; s < kWindows.size(); ++s)
    m.conv[s] = nn::Conv1d::create(store, name + ".scale" + std::to_string(s), width, width, rng);
  return m;
}

Eigen::Index MultiScale::token_count(Eigen::Index T) {
  if (T < 4 || T % 4 != 0) throw ConfigError("multi-scale tokens need T divisible by 4");
  return T + T / 2 + T / 4;
}

Var MultiScale::operator()(const Graph& g, Var z_ts) const {
  token_count(z_ts.rows());
  std::array<Var, 3> scales;
  for (std::size_t s = 0; s < kWindows.size(); ++s) {
    Var c = conv[s](g, z_ts);
    scales[s] = kWindows[s] == 1 ? c : ad::mean_pool_rows(c, kWindows[s]);
  }
  return add_positions(g, ad::concat_rows(scales));
}

Var add_positions(const Graph& g, Var tokens) {
  return ad::add(tokens, g.constant(nn::sinusoidal_positions(tokens.rows(), tokens.cols())));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw ConfigError("softplus output must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

PrototypeBank PrototypeBank::create(ParameterStore& store, const std::string& name, int k,
                                    Eigen::Index width, Rng& rng) {
  if (k < 2) throw ConfigError("prototype count K must be >= 2 (got " + std::to_string(k) + ")");
  PrototypeBank b;
  b.k = k;
  b.mu = store.add(name + ".mu", init::normal(k, width, 1.0, rng));
  b.sigma_raw = store.add(name + ".sigma_raw", Matrix::Constant(k, width, inverse_softplus(0.1)));
  return b;
}

Var PrototypeBank::initial(const Graph& g, Mode mode, const Matrix& noise) const {
  Var m = g.p(mu);
  if (mode == Mode::eval) return m;
  return ad::add(m, ad::mul(ad::softplus(g.p(sigma_raw)), g.constant(noise)));
}

SlotAttention SlotAttention::create(ParameterStore& store, const std::string& name,
                                    Eigen::Index width, int iterations, Rng& rng) {
  if (iterations < 1) throw ConfigError("slot attention needs at least one iteration");
  SlotAttention s;
  s.query = nn::Linear::create(store, name + ".query", width, width, rng, false);
  // a key bias only shifts every score of a prototype equally
  s.key = nn::Linear::create(store, name + ".key", width, width, rng, false);
  s.value = nn::Linear::create(store, name + ".value", width, width, rng, false);
  s.cell = nn::GruCell::create(store, name + ".cell", width, width, rng);
  s.refine = nn::Mlp::create(store, name + ".refine", width, width, width, rng);
  s.iterations = iterations;
  return s;
}

SlotAttention::Result SlotAttention::operator()(const Graph& g, Var init, Var inputs) const {
  if (inputs.rows() < 1) throw Error("slot attention needs at least one input token");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(init.cols()));
  Var k = key(g, inputs);
  Var v = value(g, inputs);
  Var protos = init;
  Var w;
  for (int it = 0; it < iterations; ++it) {
    w = ad::softmax_rows(ad::scale(ad::matmul_nt(query(g, protos), k), inv_sqrt));
    Var h = cell(g, ad::matmul(w, v), protos);
    protos = ad::add(h, refine(g, h));
  }
  return {protos, w};
}

Matrix sample_noise(int k, Eigen::Index width, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(k, width);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

DiscoveryOutput discover(const Graph& g, Var ts_tokens, Var text_tokens, const PrototypeBank& bank,
                         const SlotAttention& slots, Mode mode, const Matrix& noise) {
  if (ts_tokens.cols() != text_tokens.cols()) throw Error("discover: token widths differ");
  Var init = bank.initial(g, mode, noise);
  auto ts = slots(g, init, ts_tokens);
  auto text = slots(g, init, text_tokens);
  return {ts.prototypes, text.prototypes, ts.weights, text.weights};
}

}  // namespace ctpd::discovery
