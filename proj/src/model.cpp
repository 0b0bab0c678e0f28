#include "ctpd/model.hpp"

#include "ctpd/error.hpp"

#include <memory>

namespace ctpd {

Eigen::Index ModelConfig::ts_token_count() const {
  return use_multiscale ? discovery::MultiScale::token_count(grid_size) : grid_size;
}

void ModelConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0.0)) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive("variables", variables);
  positive("note_dim", note_dim);
  positive("width", width);
  positive("time_functions", time_functions);
  positive("temperature", temperature);
  positive("window_hours", window_hours);
  positive("pos_weight", pos_weight);
  positive("fusion_layers", fusion_layers);
  positive("decoder_layers", decoder_layers);
  if (time_dim < 2) throw ConfigError("model.time_dim must be at least 2");
  if (k_prototypes < 2) throw ConfigError("model.k_prototypes must be >= 2");
  if (slot_iters < 1) throw ConfigError("model.slot_iters must be >= 1");
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss weights must be non-negative");
  if (heads < 1 || width % heads != 0)
    throw ConfigError("model.width must be divisible by model.heads");
  encoding::validate_grid_size(grid_size);
  if (!use_prototypes && !use_timestamp_tokens)
    throw ConfigError("removing both prototype and timestamp tokens leaves nothing to fuse");
}

SampleInputs prepare_sample(const data::AdmissionRecord& record, const encoding::ReferenceGrid& grid,
                            const std::vector<data::VariableSpec>& specs, int note_dim) {
  SampleInputs s;
  s.id = record.id;
  s.imputed = encoding::impute_locf(record, grid, specs).values;
  s.observations = encoding::collect_observations(record, grid, specs);
  s.notes = encoding::collect_notes(record, grid, note_dim);
  s.labels = record.labels.as_row();
  return s;
}

CtpdModel::CtpdModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      grid_(encoding::ReferenceGrid::uniform(config_.grid_size, config_.window_hours)) {
  config_.validate();
  Rng rng(seed);
  const Eigen::Index D = config_.width;
  mits = encoding::MitsEncoder::create(params_, "mits", config_.variables, D, config_.time_functions,
                                       config_.time_dim, config_.window_hours, rng);
  notes = encoding::NoteEncoder::create(params_, "notes", config_.note_dim, D, config_.time_functions,
                                        config_.time_dim, config_.window_hours, config_.null_note, rng);
  multiscale = discovery::MultiScale::create(params_, "multiscale", D, rng);
  bank = discovery::PrototypeBank::create(params_, "prototypes", config_.k_prototypes, D, rng);
  slots = discovery::SlotAttention::create(params_, "slots", D, config_.slot_iters, rng);
  importance =
      objectives::SlotImportance::create(params_, "importance", D, D, config_.k_prototypes, rng);
  ts_decoder = objectives::ReconDecoder::create(params_, "ts_decoder", config_.grid_size, D,
                                                config_.heads, config_.variables,
                                                config_.decoder_layers, rng);
  text_decoder = objectives::ReconDecoder::create(params_, "text_decoder", config_.grid_size, D,
                                                  config_.heads, D, config_.decoder_layers, rng);
  fusion_encoder =
      fusion::FusionEncoder::create(params_, "fusion", D, config_.heads, config_.fusion_layers, rng);
  pooling = fusion::Pooling::create(params_, "pooling", D, rng);
  head = fusion::Head::create(params_, "head", D, config_.classes(), rng);
}

Matrix CtpdModel::sample_noise(Rng& rng) const {
  return discovery::sample_noise(config_.k_prototypes, config_.width, rng);
}

CtpdModel::Forward CtpdModel::forward(const nn::Graph& g, const SampleInputs& sample,
                                      discovery::Mode mode, const Matrix& noise,
                                      bool with_aux) const {
  if (sample.imputed.rows() != config_.variables || sample.imputed.cols() != config_.grid_size)
    throw Error("sample '" + sample.id + "': imputed series has the wrong shape");
  Forward f;
  f.z_ts = mits(g, grid_, sample.imputed, sample.observations);
  f.z_text = notes(g, grid_, sample.notes);
  f.ts_tokens = config_.use_multiscale ? multiscale(g, f.z_ts) : discovery::add_positions(g, f.z_ts);
  f.g_ts = ad::mean_rows(f.ts_tokens);
  f.g_text = ad::mean_rows(f.z_text);

  const Eigen::Index K = config_.k_prototypes;
  fusion::GroupTokens tokens;
  std::array<Eigen::Index, fusion::kGroups> expected{};
  if (config_.use_prototypes) {
    f.discovery = discovery::discover(g, f.ts_tokens, f.z_text, bank, slots, mode, noise);
    tokens[fusion::ts_prototype] = f.discovery.p_ts;
    tokens[fusion::text_prototype] = f.discovery.p_text;
    expected[fusion::ts_prototype] = K;
    expected[fusion::text_prototype] = K;
  }
  if (config_.use_timestamp_tokens) {
    tokens[fusion::ts_timestamp] = f.ts_tokens;
    tokens[fusion::text_timestamp] = f.z_text;
    expected[fusion::ts_timestamp] = config_.ts_token_count();
    expected[fusion::text_timestamp] = config_.grid_size;
  }
  auto context = fusion_encoder(g, tokens, expected);
  auto [f_ts, f_text] = pooling(g, context);
  f.logits = head(g, f_ts, f_text);

  if (with_aux && config_.recon_active()) {
    f.recon_ts = ad::mse(ts_decoder(g, f.discovery.p_ts), sample.imputed.transpose());
    f.recon_text = ad::mse(text_decoder(g, f.discovery.p_text),
                           sample.text_target ? *sample.text_target : f.z_text.value());
  }
  return f;
}

Matrix CtpdModel::predict(const SampleInputs& sample) const {
  ad::Tape tape;
  nn::Graph g{tape, params_};
  return forward(g, sample, discovery::Mode::eval, Matrix(), false).logits.value();
}

CtpdModel::BatchResult CtpdModel::batch(std::span<const SampleInputs* const> samples,
                                        discovery::Mode mode, std::span<const Matrix> noise,
                                        Gradients* grads) const {
  const std::size_t B = samples.size();
  if (B == 0) throw Error("empty batch");
  if (mode == discovery::Mode::train && noise.size() != B)
    throw Error("train-mode batch needs one noise matrix per sample");
  const bool tpnce = config_.tpnce_active();
  const bool recon = config_.recon_active();

  struct Exported {
    Var pred, recon_ts, recon_text, p_ts, p_text, g_ts, g_text;
  };
  std::vector<std::unique_ptr<ad::Tape>> tapes;
  std::vector<Exported> out(B);
  BatchResult result;
  result.logits.reserve(B);
  static const Matrix kNoNoise;
  for (std::size_t i = 0; i < B; ++i) {
    tapes.push_back(std::make_unique<ad::Tape>());
    nn::Graph g{*tapes.back(), params_};
    const Matrix& eps = mode == discovery::Mode::train ? noise[i] : kNoNoise;
    Forward f = forward(g, *samples[i], mode, eps, true);
    out[i].pred = fusion::prediction_loss(f.logits, samples[i]->labels, config_.pos_weight);
    out[i].recon_ts = f.recon_ts;
    out[i].recon_text = f.recon_text;
    out[i].p_ts = f.discovery.p_ts;
    out[i].p_text = f.discovery.p_text;
    out[i].g_ts = f.g_ts;
    out[i].g_text = f.g_text;
    result.logits.push_back(f.logits.value());
  }

  // batch-level tape: the exported per-sample values enter as leaves
  ad::Tape bt;
  nn::Graph bg{bt, params_};
  struct Leaves {
    Var pred, recon_ts, recon_text, p_ts, p_text, g_ts, g_text;
  };
  std::vector<Leaves> leaves(B);
  std::vector<Var> pred, rts, rtext, pts, ptext, gts, gtext;
  auto lift = [&](Var v, std::vector<Var>& into) {
    if (!v.valid()) return Var();
    Var leaf = bt.leaf(v.value());
    into.push_back(leaf);
    return leaf;
  };
  for (std::size_t i = 0; i < B; ++i) {
    leaves[i].pred = lift(out[i].pred, pred);
    if (recon) {
      leaves[i].recon_ts = lift(out[i].recon_ts, rts);
      leaves[i].recon_text = lift(out[i].recon_text, rtext);
    }
    if (tpnce) {
      leaves[i].p_ts = lift(out[i].p_ts, pts);
      leaves[i].p_text = lift(out[i].p_text, ptext);
      leaves[i].g_ts = lift(out[i].g_ts, gts);
      leaves[i].g_text = lift(out[i].g_text, gtext);
    }
  }
  Var total = ad::mean_all(ad::concat_rows(pred));
  const double pred_mean = total.value()(0, 0);
  double tpnce_value = 0.0, rts_value = 0.0, rtext_value = 0.0;
  if (tpnce) {
    objectives::TpnceConfig tc{config_.temperature, config_.tpnce_reduction, config_.per_pair_beta};
    Var t = objectives::tpnce_loss(bg, ad::concat_rows(pts), ad::concat_rows(ptext),
                                   ad::concat_rows(gts), ad::concat_rows(gtext), importance, tc,
                                   config_.k_prototypes);
    tpnce_value = t.value()(0, 0);
    total = ad::add(total, ad::scale(t, config_.lambda1));
  }
  if (recon) {
    Var a = ad::mean_all(ad::concat_rows(rts));
    Var b = ad::mean_all(ad::concat_rows(rtext));
    rts_value = a.value()(0, 0);
    rtext_value = b.value()(0, 0);
    total = ad::add(total, ad::scale(ad::add(a, b), 0.5 * config_.lambda2));
  }
  result.loss = objectives::total_loss(pred_mean, tpnce_value, rts_value, rtext_value,
                                       tpnce ? config_.lambda1 : 0.0, recon ? config_.lambda2 : 0.0);
  if (grads == nullptr) return result;

  bt.backward(total);
  bt.accumulate(*grads);
  std::vector<ad::Seed> seeds;
  for (std::size_t i = 0; i < B; ++i) {
    seeds.clear();
    auto seed = [&](Var sample_var, Var leaf) {
      if (leaf.valid() && bt.has_grad(leaf)) seeds.emplace_back(sample_var, bt.grad(leaf));
    };
    seed(out[i].pred, leaves[i].pred);
    seed(out[i].recon_ts, leaves[i].recon_ts);
    seed(out[i].recon_text, leaves[i].recon_text);
    seed(out[i].p_ts, leaves[i].p_ts);
    seed(out[i].p_text, leaves[i].p_text);
    seed(out[i].g_ts, leaves[i].g_ts);
    seed(out[i].g_text, leaves[i].g_text);
    if (seeds.empty()) continue;
    tapes[i]->backward(seeds);
    tapes[i]->accumulate(*grads);
  }
  return result;
}

}  // namespace ctpd
