#include "ctpd/fusion.hpp"

#include "ctpd/error.hpp"

namespace ctpd::fusion {

FusionEncoder FusionEncoder::create(ParameterStore& store, const std::string& name,
                                    Eigen::Index width, int heads, int n_layers, Rng& rng) {
  FusionEncoder f;
  f.type_embeddings = store.add(name + ".type_embeddings", init::normal(kGroups, width, 0.02, rng));
  for (int l = 0; l < n_layers; ++l)
    f.layers.push_back(nn::EncoderLayer::create(store, name + ".layer" + std::to_string(l), width,
                                                heads, 4 * width, rng));
  return f;
}

GroupTokens FusionEncoder::operator()(const Graph& g, const GroupTokens& tokens,
                                      const std::array<Eigen::Index, kGroups>& expected) const {
  Var types = g.p(type_embeddings);
  std::vector<Var> parts;
  std::array<Eigen::Index, kGroups> offsets{};
  Eigen::Index total = 0;
  for (int grp = 0; grp < kGroups; ++grp) {
    const Eigen::Index have = tokens[grp].valid() ? tokens[grp].rows() : 0;
    if (have != expected[grp])
      throw Error("fusion: token group " + std::to_string(grp) + " has " + std::to_string(have) +
                  " tokens, expected " + std::to_string(expected[grp]));
    offsets[grp] = total;
    if (have == 0) continue;
    parts.push_back(ad::add_row(tokens[grp], ad::slice_rows(types, grp, 1)));
    total += have;
  }
  if (parts.empty()) throw Error("fusion: no tokens");
  Var x = parts.size() == 1 ? parts[0] : ad::concat_rows(parts);
  for (const auto& layer : layers) x = layer(g, x);
  GroupTokens out;
  for (int grp = 0; grp < kGroups; ++grp)
    if (expected[grp] > 0) out[grp] = ad::slice_rows(x, offsets[grp], expected[grp]);
  return out;
}

AttentionPool AttentionPool::create(ParameterStore& store, const std::string& name,
                                    Eigen::Index width, Rng& rng) {
  AttentionPool p;
  p.proj = nn::Linear::create(store, name + ".proj", width, width, rng);
  p.score = store.add(name + ".score", init::xavier(width, 1, rng));
  return p;
}

Var AttentionPool::weights(const Graph& g, Var tokens) const {
  if (tokens.rows() == 0) throw Error("attention pooling over an empty group");
  Var s = ad::matmul(ad::tanh(proj(g, tokens)), g.p(score));  // L x 1
  return ad::softmax_rows(ad::transpose(s));
}

Var AttentionPool::operator()(const Graph& g, Var tokens) const {
  return ad::matmul(weights(g, tokens), tokens);
}

Pooling Pooling::create(ParameterStore& store, const std::string& name, Eigen::Index width,
                        Rng& rng) {
  static constexpr const char* kNames[kGroups] = {"ts_prototype", "ts_timestamp", "text_prototype",
                                                  "text_timestamp"};
  Pooling p;
  for (int grp = 0; grp < kGroups; ++grp)
    p.pools[grp] = AttentionPool::create(store, name + "." + kNames[grp], width, rng);
  return p;
}

std::pair<Var, Var> Pooling::operator()(const Graph& g, const GroupTokens& tokens) const {
  auto modality = [&](int a, int b) {
    Var f;
    for (int grp : {a, b}) {
      if (!tokens[grp].valid()) continue;
      Var pooled = pools[grp](g, tokens[grp]);
      f = f.valid() ? ad::add(f, pooled) : pooled;
    }
    if (!f.valid()) throw Error("pooling: modality without tokens");
    return f;
  };
  return {modality(ts_prototype, ts_timestamp), modality(text_prototype, text_timestamp)};
}

Head Head::create(ParameterStore& store, const std::string& name, Eigen::Index width,
                  Eigen::Index classes, Rng& rng) {
  return Head{nn::Mlp::create(store, name + ".mlp", 2 * width, width, classes, rng)};
}

Var Head::operator()(const Graph& g, Var f_ts, Var f_text) const {
  std::array<Var, 2> both{f_ts, f_text};
  return mlp(g, ad::concat_cols(both));
}

Var prediction_loss(Var logits, const Matrix& labels, double pos_weight) {
  if (labels.rows() != logits.rows() || labels.cols() != logits.cols())
    throw Error("prediction_loss: label shape does not match logits");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const double y = labels.data()[i];
    if (y != 0.0 && y != 1.0) throw ValidationError("label outside {0, 1}");
  }
  return ad::bce_with_logits(logits, labels, pos_weight);
}

}  // namespace ctpd::fusion
