#include "ctpd/training.hpp"

#include "ctpd/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ctpd::training {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw ConfigError("train.warmup_fraction must lie in [0, 1)");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("train.grad_clip_norm must be positive");
  if (patience < 1) throw ConfigError("train.patience must be positive");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
}

LrSchedule LrSchedule::create(double base, double warmup_fraction, long total_steps) {
  LrSchedule s;
  s.base = base;
  s.total_steps = std::max(1L, total_steps);
  s.warmup_steps = static_cast<long>(std::floor(warmup_fraction * static_cast<double>(s.total_steps)));
  return s;
}

double LrSchedule::at(long step) const {
  if (step < warmup_steps) return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const long span = std::max(1L, total_steps - warmup_steps);
  const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / span);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(const ParameterStore& store, double beta1, double beta2, double epsilon)
    : beta1_(beta1), beta2_(beta2), eps_(epsilon) {
  for (auto id : store.all()) {
    m_.push_back(Matrix::Zero(store.value(id).rows(), store.value(id).cols()));
    v_.push_back(m_.back());
  }
}

void Adam::step(ParameterStore& store, const Gradients& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto id : store.all()) {
    const auto& g = grads[id];
    auto& m = m_[id.index];
    auto& v = v_[id.index];
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    store.value(id).array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = grads.global_norm();
  if (norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

Rng sample_rng(std::uint64_t seed, int epoch, long step, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(index), 0xD15Cu};
  return Rng(seq);
}

Matrix predict_logits(const CtpdModel& model, const std::vector<SampleInputs>& samples) {
  Matrix out(static_cast<Eigen::Index>(samples.size()), model.config().classes());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = model.predict(samples[i]);
  return out;
}

Matrix stack_labels(const std::vector<SampleInputs>& samples) {
  if (samples.empty()) return Matrix();
  Matrix out(static_cast<Eigen::Index>(samples.size()), samples.front().labels.cols());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = samples[i].labels;
  return out;
}

Matrix sigmoid(const Matrix& logits) {
  return logits.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

metrics::MetricsReport evaluate_model(const CtpdModel& model,
                                      const std::vector<SampleInputs>& validation,
                                      const std::vector<SampleInputs>& target) {
  return metrics::evaluate_scores(sigmoid(predict_logits(model, validation)), stack_labels(validation),
                                  sigmoid(predict_logits(model, target)), stack_labels(target));
}

namespace {

std::string norm_snapshot(const ParameterStore& store) {
  std::vector<std::pair<double, std::string>> norms;
  for (auto id : store.all()) norms.emplace_back(store.value(id).norm(), store.name(id));
  std::sort(norms.rbegin(), norms.rend());
  std::ostringstream os;
  os << "largest parameter norms:";
  for (std::size_t i = 0; i < std::min<std::size_t>(3, norms.size()); ++i)
    os << ' ' << norms[i].second << '=' << norms[i].first;
  return os.str();
}

struct StepResult {
  objectives::LossBundle loss;
  double grad_norm = 0.0;
};

StepResult optimizer_step(CtpdModel& model, Adam& adam, Gradients& grads,
                          std::span<const SampleInputs* const> batch, std::span<const Matrix> noise,
                          double lr, double clip, long step) {
  grads.set_zero();
  StepResult r;
  try {
    r.loss = model.batch(batch, discovery::Mode::train, noise, &grads).loss;
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(step) + ": " + e.what() + "; " +
                       norm_snapshot(model.params()));
  }
  if (!grads.all_finite())
    throw NumericError("step " + std::to_string(step) + ": non-finite gradient; " +
                       norm_snapshot(model.params()));
  r.grad_norm = clip_global_norm(grads, clip);
  adam.step(model.params(), grads, lr);
  return r;
}

}  // namespace

TrainHistory train_model(CtpdModel& model, const TrainConfig& config,
                         const std::vector<SampleInputs>& train,
                         const std::vector<SampleInputs>& validation, const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw Error("training split is empty");
  if (validation.empty()) throw Error("validation split is empty");
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const long steps_per_epoch = static_cast<long>((train.size() + batch - 1) / batch);
  const auto schedule =
      LrSchedule::create(config.learning_rate, config.warmup_fraction, steps_per_epoch * config.max_epochs);
  Adam adam(model.params(), config.beta1, config.beta2, config.epsilon);
  Gradients grads(model.params());
  const Matrix val_labels = stack_labels(validation);

  TrainHistory history;
  ParameterStore best = model.params();
  int since_best = 0;
  long step = 0;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(train.size());
  std::vector<const SampleInputs*> members;
  std::vector<Matrix> noise;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::seed_seq shuffle_seed{static_cast<std::uint32_t>(config.seed),
                               static_cast<std::uint32_t>(config.seed >> 32),
                               static_cast<std::uint32_t>(epoch), 0x5EEDu};
    Rng shuffle_rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    long batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++step, ++batches) {
      members.clear();
      noise.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + batch); ++i) {
        members.push_back(&train[order[i]]);
        Rng rng = sample_rng(config.seed, epoch, step, i - start);
        noise.push_back(model.sample_noise(rng));
      }
      const double lr = schedule.at(step);
      auto r = optimizer_step(model, adam, grads, members, noise, lr, config.grad_clip_norm, step);
      history.step_losses.push_back(r.loss.total);
      rec.train.pred += r.loss.pred;
      rec.train.tpnce += r.loss.tpnce;
      rec.train.recon_ts += r.loss.recon_ts;
      rec.train.recon_text += r.loss.recon_text;
      rec.train.recon += r.loss.recon;
      rec.train.total += r.loss.total;
      rec.train.lambda1 = r.loss.lambda1;
      rec.train.lambda2 = r.loss.lambda2;
      rec.learning_rate = lr;
    }
    const double nb = static_cast<double>(batches);
    rec.train.pred /= nb;
    rec.train.tpnce /= nb;
    rec.train.recon_ts /= nb;
    rec.train.recon_text /= nb;
    rec.train.recon /= nb;
    rec.train.total /= nb;

    const Matrix val_scores = sigmoid(predict_logits(model, validation));
    rec.val_auroc = metrics::selection_auroc(val_scores, val_labels);
    auto report = metrics::evaluate_scores(val_scores, val_labels, val_scores, val_labels);
    rec.val_aupr = report.aupr;
    rec.val_f1 = report.f1;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
    spdlog::info("epoch {} loss {:.4f} (pred {:.4f} tpnce {:.4f} recon {:.4f}) val auroc {:.4f} lr {:.2e} {:.1f}s",
                 epoch, rec.train.total, rec.train.pred, rec.train.tpnce, rec.train.recon,
                 rec.val_auroc, rec.learning_rate, rec.seconds);
    if (on_epoch) on_epoch(rec);

    if (history.best_epoch < 0 || rec.val_auroc > history.best_val_auroc) {
      history.best_epoch = epoch;
      history.best_val_auroc = rec.val_auroc;
      best = model.params();
      since_best = 0;
    } else if (config.early_stopping && ++since_best >= config.patience) {
      spdlog::info("early stop: no validation AUROC gain for {} epochs", config.patience);
      break;
    }
  }
  history.steps = step;
  model.params() = best;
  return history;
}

std::vector<objectives::LossBundle> overfit_batch(CtpdModel& model, const TrainConfig& config,
                                                  const std::vector<SampleInputs>& batch, int steps) {
  config.validate();
  std::vector<const SampleInputs*> members;
  for (const auto& s : batch) members.push_back(&s);
  Adam adam(model.params(), config.beta1, config.beta2, config.epsilon);
  Gradients grads(model.params());
  const auto schedule = LrSchedule::create(config.learning_rate, config.warmup_fraction, steps);
  std::vector<objectives::LossBundle> trace;
  std::vector<Matrix> noise;
  for (int step = 0; step < steps; ++step) {
    noise.clear();
    for (std::size_t i = 0; i < members.size(); ++i) {
      Rng rng = sample_rng(config.seed, 0, step, i);
      noise.push_back(model.sample_noise(rng));
    }
    auto r = optimizer_step(model, adam, grads, members, noise, schedule.at(step),
                            config.grad_clip_norm, step);
    trace.push_back(r.loss);
  }
  // loss after the final update
  noise.clear();
  for (std::size_t i = 0; i < members.size(); ++i) {
    Rng rng = sample_rng(config.seed, 0, steps, i);
    noise.push_back(model.sample_noise(rng));
  }
  trace.push_back(model.batch(members, discovery::Mode::train, noise, nullptr).loss);
  return trace;
}

}  // namespace ctpd::training
