#pragma once

// The full model: encoders, prototype discovery, alignment and reconstruction
// objectives, fusion and the task head, plus batched loss evaluation.

#include "ctpd/data.hpp"
#include "ctpd/fusion.hpp"
#include "ctpd/objectives.hpp"
#include "ctpd/pattern_discovery.hpp"
#include "ctpd/time_encoding.hpp"

#include <optional>
#include <span>

namespace ctpd {

using ad::Var;

struct ModelConfig {
  int variables = 17;
  int note_dim = 128;
  int grid_size = 24;          // T
  double window_hours = 48.0;  // W
  int width = 128;             // D
  int k_prototypes = 16;       // K
  int time_functions = 8;      // V, also the mTAND head count
  int time_dim = 16;
  double temperature = 0.1;
  double lambda1 = 0.1;
  double lambda2 = 0.5;
  int slot_iters = 3;
  int fusion_layers = 2;
  int decoder_layers = 2;
  int heads = 4;
  data::Task task = data::Task::binary;
  double pos_weight = 1.0;
  objectives::Reduction tpnce_reduction = objectives::Reduction::mean;
  bool per_pair_beta = true;
  bool null_note = false;  // learned stand-in for admissions without notes

  // ablation switches
  bool use_prototypes = true;
  bool use_timestamp_tokens = true;
  bool use_multiscale = true;
  bool use_tpnce = true;
  bool use_recon = true;

  int classes() const { return task == data::Task::binary ? 1 : data::kPhenotypeCount; }
  bool tpnce_active() const { return use_prototypes && use_tpnce; }
  bool recon_active() const { return use_prototypes && use_recon; }
  /// Rows fed to discovery and fusion from the time-series side.
  Eigen::Index ts_token_count() const;
  void validate() const;
};

/// Model-ready tensors of one normalized, embedded admission.
struct SampleInputs {
  std::string id;
  Matrix imputed;  // d_m x T
  encoding::IrregularSeries observations;
  encoding::NoteSeries notes;
  Matrix labels;  // 1 x C
  /// Overrides the (gradient-stopped) text reconstruction target, which is
  /// otherwise the sample's own z_text. Finite-difference checks pin it.
  std::optional<Matrix> text_target;
};

SampleInputs prepare_sample(const data::AdmissionRecord& record, const encoding::ReferenceGrid& grid,
                            const std::vector<data::VariableSpec>& specs, int note_dim);

class CtpdModel {
 public:
  struct Forward {
    Var z_ts;
    Var z_text;
    Var ts_tokens;  // multi-scale tokens, or z_ts + positions when multi-scale is off
    Var g_ts;       // 1 x D global embeddings
    Var g_text;
    discovery::DiscoveryOutput discovery;  // empty without prototypes
    Var logits;
    Var recon_ts;  // 1 x 1, empty unless requested and active
    Var recon_text;
  };

  struct BatchResult {
    objectives::LossBundle loss;
    std::vector<Matrix> logits;  // 1 x C per sample
  };

  CtpdModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const encoding::ReferenceGrid& grid() const { return grid_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  Matrix sample_noise(Rng& rng) const;
  Forward forward(const nn::Graph& g, const SampleInputs& sample, discovery::Mode mode,
                  const Matrix& noise, bool with_aux) const;
  /// Eval-mode logits (1 x C).
  Matrix predict(const SampleInputs& sample) const;

  /// Loss over a batch; with `grads`, also adds d(total)/d(params) into it.
  /// One tape per sample plus one batch tape for the contrastive term, so the
  /// parameter gradients are reduced in a fixed sample order.
  BatchResult batch(std::span<const SampleInputs* const> samples, discovery::Mode mode,
                    std::span<const Matrix> noise, Gradients* grads) const;

  // components, exposed for inspection and component-level checks
  encoding::MitsEncoder mits;
  encoding::NoteEncoder notes;
  discovery::MultiScale multiscale;
  discovery::PrototypeBank bank;
  discovery::SlotAttention slots;
  objectives::SlotImportance importance;
  objectives::ReconDecoder ts_decoder;
  objectives::ReconDecoder text_decoder;
  fusion::FusionEncoder fusion_encoder;
  fusion::Pooling pooling;
  fusion::Head head;

 private:
  ModelConfig config_;
  encoding::ReferenceGrid grid_;
  ParameterStore params_;
};

}  // namespace ctpd
