#include "ctpd/objectives.hpp"

#include "ctpd/error.hpp"

#include <cmath>

namespace ctpd::objectives {

SlotImportance SlotImportance::create(ParameterStore& store, const std::string& name,
                                      Eigen::Index width, Eigen::Index hidden, int k, Rng& rng) {
  return SlotImportance{nn::Linear::create(store, name + ".ts_in", width, hidden, rng),
                        nn::Linear::create(store, name + ".text_in", width, hidden, rng, false),
                        nn::Linear::create(store, name + ".out", hidden, k, rng)};
}

Var SlotImportance::operator()(const Graph& g, Var g_ts, Var g_text) const {
  Var h = ad::gelu(ad::pairwise_add_rows(ts_in(g, g_ts), text_in(g, g_text)));
  return ad::softmax_rows(out(g, h));
}

Var pair_similarities(Var p_ts, Var p_text, Var beta, Eigen::Index k) {
  const Eigen::Index b1 = p_ts.rows() / k;
  const Eigen::Index b2 = p_text.rows() / k;
  if (p_ts.rows() != b1 * k || p_text.rows() != b2 * k)
    throw Error("pair_similarities: bank rows not a multiple of K");
  if (beta.rows() != b1 * b2 || beta.cols() != k) throw Error("pair_similarities: beta shape");
  Var cos = ad::pairwise_slot_dot(ad::row_normalize(p_ts), ad::row_normalize(p_text), k);
  return ad::reshape(ad::sum_cols(ad::mul(beta, cos)), b1, b2);
}

namespace {

Var diagonal_ce(Var logits, Reduction reduction) {
  Var nll = ad::scale(ad::diagonal(ad::log_softmax_rows(logits)), -1.0);
  return reduction == Reduction::mean ? ad::mean_all(nll) : ad::sum_all(nll);
}

}  // namespace

Var tpnce_loss(const Graph& g, Var p_ts, Var p_text, Var g_ts, Var g_text,
               const SlotImportance& importance, const TpnceConfig& config, Eigen::Index k) {
  if (!(config.temperature > 0.0)) throw ConfigError("TPNCE temperature must be positive");
  const Eigen::Index b = g_ts.rows();
  if (g_text.rows() != b || p_ts.rows() != b * k || p_text.rows() != b * k)
    throw Error("tpnce_loss: batch shapes differ");
  Var beta;
  if (config.per_pair_beta) {
    beta = importance(g, g_ts, g_text);
  } else {
    // beta of pair (i, i) repeated over the row
    Var own = importance(g, g_ts, g_text);
    std::vector<Var> rows;
    rows.reserve(static_cast<std::size_t>(b * b));
    for (Eigen::Index i = 0; i < b; ++i) {
      Var d = ad::slice_rows(own, i * b + i, 1);
      for (Eigen::Index j = 0; j < b; ++j) rows.push_back(d);
    }
    beta = ad::concat_rows(rows);
  }
  Var logits = ad::scale(pair_similarities(p_ts, p_text, beta, k), 1.0 / config.temperature);
  Var forward = diagonal_ce(logits, config.reduction);
  Var backward = diagonal_ce(ad::transpose(logits), config.reduction);
  return ad::scale(ad::add(forward, backward), 0.5);
}

ReconDecoder ReconDecoder::create(ParameterStore& store, const std::string& name, Eigen::Index T,
                                  Eigen::Index width, int heads, Eigen::Index out_dim, int n_layers,
                                  Rng& rng) {
  ReconDecoder d;
  d.queries = store.add(name + ".queries", init::normal(T, width, 1.0, rng));
  for (int l = 0; l < n_layers; ++l)
    d.layers.push_back(nn::DecoderLayer::create(store, name + ".layer" + std::to_string(l), width,
                                                heads, 4 * width, rng));
  d.final_norm = nn::LayerNorm::create(store, name + ".final_norm", width);
  d.head = nn::Linear::create(store, name + ".head", width, out_dim, rng);
  return d;
}

Var ReconDecoder::operator()(const Graph& g, Var prototypes) const {
  Var x = g.p(queries);
  for (const auto& layer : layers) x = layer(g, x, prototypes);
  return head(g, final_norm(g, x));
}

LossBundle total_loss(double pred, double tpnce, double recon_ts, double recon_text, double lambda1,
                      double lambda2) {
  const std::pair<const char*, double> parts[] = {
      {"pred", pred}, {"tpnce", tpnce}, {"recon_ts", recon_ts}, {"recon_text", recon_text}};
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component '") + name + "'");
  LossBundle l;
  l.pred = pred;
  l.tpnce = tpnce;
  l.recon_ts = recon_ts;
  l.recon_text = recon_text;
  l.recon = 0.5 * (recon_ts + recon_text);
  l.lambda1 = lambda1;
  l.lambda2 = lambda2;
  l.total = pred + lambda1 * tpnce + lambda2 * l.recon;
  return l;
}

}  // namespace ctpd::objectives
