#pragma once

// Optimization loop, learning-rate schedule, early stopping and evaluation.

#include "ctpd/metrics.hpp"
#include "ctpd/model.hpp"

#include <functional>
#include <optional>

namespace ctpd::training {

struct TrainConfig {
  int batch_size = 128;
  double learning_rate = 4e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double warmup_fraction = 0.2;
  double grad_clip_norm = 0.5;
  int patience = 5;
  int max_epochs = 100;
  bool early_stopping = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Linear warmup from 0 to the base rate, then cosine decay to 0.
struct LrSchedule {
  double base = 0.0;
  long warmup_steps = 0;
  long total_steps = 1;

  static LrSchedule create(double base, double warmup_fraction, long total_steps);
  double at(long step) const;
};

class Adam {
 public:
  Adam(const ParameterStore& store, double beta1, double beta2, double epsilon);
  void step(ParameterStore& store, const Gradients& grads, double lr);
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

/// Scales grads so their global norm is at most max_norm; returns the norm
/// before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

struct EpochRecord {
  int epoch = 0;
  objectives::LossBundle train;  // means over the epoch's batches
  double val_auroc = 0.0;
  double val_aupr = 0.0;
  double val_f1 = 0.0;
  double learning_rate = 0.0;  // at the last step of the epoch
  double seconds = 0.0;        // wall clock since training started
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;  // total loss of every optimizer step
  int best_epoch = -1;
  double best_val_auroc = 0.0;
  long steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place and restores the parameters of the best validation epoch.
/// A non-finite loss or gradient throws NumericError with diagnostics.
TrainHistory train_model(CtpdModel& model, const TrainConfig& config,
                         const std::vector<SampleInputs>& train,
                         const std::vector<SampleInputs>& validation,
                         const EpochCallback& on_epoch = {});

/// Eval-mode logits of every sample, N x C.
Matrix predict_logits(const CtpdModel& model, const std::vector<SampleInputs>& samples);
Matrix stack_labels(const std::vector<SampleInputs>& samples);
Matrix sigmoid(const Matrix& logits);

/// Thresholds chosen on `validation`, metrics reported on `target`.
metrics::MetricsReport evaluate_model(const CtpdModel& model,
                                      const std::vector<SampleInputs>& validation,
                                      const std::vector<SampleInputs>& target);

/// Per-sample RNG for step `step` of epoch `epoch`.
Rng sample_rng(std::uint64_t seed, int epoch, long step, std::size_t index);

/// Repeated optimizer steps on one fixed batch, no early stopping. Returns the
/// LossBundle after every step (index 0 is before the first update).
std::vector<objectives::LossBundle> overfit_batch(CtpdModel& model, const TrainConfig& config,
                                                  const std::vector<SampleInputs>& batch, int steps);

}  // namespace ctpd::training
