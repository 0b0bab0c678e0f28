#include "ctpd/metrics.hpp"

#include "ctpd/error.hpp"

#include <algorithm>
#include <numeric>

namespace ctpd::metrics {

namespace {

void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricError("scores and labels differ in length");
  for (int y : labels)
    if (y != 0 && y != 1) throw MetricError("labels must be 0 or 1");
}

std::vector<std::size_t> order_descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  const auto neg = static_cast<std::ptrdiff_t>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw MetricError("AUROC undefined: labels hold a single class");
  // twice the concordant-pair count, ties counting once, walking tie groups
  auto idx = order_descending(scores);
  double twice = 0.0;
  std::ptrdiff_t neg_below = neg;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::ptrdiff_t p = 0, n = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? p : n) += 1;
      ++j;
    }
    neg_below -= n;
    twice += static_cast<double>(p) * static_cast<double>(2 * neg_below + n);
    i = j;
  }
  return twice / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double aupr(std::span<const double> scores, std::span<const int> labels) {
  check_sizes(scores, labels);
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0) throw MetricError("AUPR undefined: no positive labels");
  auto idx = order_descending(scores);
  double ap = 0.0, prev_recall = 0.0;
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double f1_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_sizes(scores, labels);
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i] == 1) ++tp;
    else if (predicted) ++fp;
    else if (labels[i] == 1) ++fn;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

ThresholdChoice f1_best_threshold(std::span<const double> val_scores, std::span<const int> val_labels,
                                  std::span<const double> target_scores,
                                  std::span<const int> target_labels) {
  check_sizes(val_scores, val_labels);
  const auto pos = std::count(val_labels.begin(), val_labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(val_labels.size()))
    throw MetricError("F1 threshold undefined: validation labels hold a single class");
  std::vector<double> candidates(val_scores.begin(), val_scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  ThresholdChoice best;
  best.validation_f1 = -1.0;
  for (double t : candidates) {  // ascending, so strict improvement keeps the lowest
    const double f = f1_at(val_scores, val_labels, t);
    if (f > best.validation_f1) {
      best.validation_f1 = f;
      best.threshold = t;
    }
  }
  const double neg_inf = -std::numeric_limits<double>::infinity();
  const double f_all = f1_at(val_scores, val_labels, neg_inf);
  if (f_all > best.validation_f1) {
    best.validation_f1 = f_all;
    best.threshold = neg_inf;
  }
  best.f1 = f1_at(target_scores, target_labels, best.threshold);
  return best;
}

namespace {

struct Column {
  std::vector<double> scores;
  std::vector<int> labels;
};

Column column(const Matrix& scores, const Matrix& labels, Eigen::Index c) {
  Column out;
  out.scores.resize(static_cast<std::size_t>(scores.rows()));
  out.labels.resize(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    out.scores[static_cast<std::size_t>(i)] = scores(i, c);
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(labels(i, c));
  }
  return out;
}

bool both_classes(const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(labels.size());
}

}  // namespace

MetricsReport evaluate_scores(const Matrix& val_scores, const Matrix& val_labels,
                              const Matrix& target_scores, const Matrix& target_labels) {
  if (val_scores.rows() != val_labels.rows() || val_scores.cols() != val_labels.cols() ||
      target_scores.rows() != target_labels.rows() || target_scores.cols() != target_labels.cols() ||
      val_scores.cols() != target_scores.cols())
    throw MetricError("score and label matrices differ in shape");
  MetricsReport r;
  const Eigen::Index C = val_scores.cols();
  if (C == 1) {
    auto v = column(val_scores, val_labels, 0);
    auto t = column(target_scores, target_labels, 0);
    r.auroc = auroc(t.scores, t.labels);
    r.aupr = aupr(t.scores, t.labels);
    auto choice = f1_best_threshold(v.scores, v.labels, t.scores, t.labels);
    r.f1 = choice.f1;
    r.threshold = choice.threshold;
    return r;
  }
  r.macro = true;
  int defined = 0;
  for (Eigen::Index c = 0; c < C; ++c) {
    LabelMetrics lm;
    lm.label = static_cast<int>(c);
    auto v = column(val_scores, val_labels, c);
    auto t = column(target_scores, target_labels, c);
    if (both_classes(v.labels) && both_classes(t.labels)) {
      lm.defined = true;
      lm.auroc = auroc(t.scores, t.labels);
      lm.aupr = aupr(t.scores, t.labels);
      auto choice = f1_best_threshold(v.scores, v.labels, t.scores, t.labels);
      lm.f1 = choice.f1;
      lm.threshold = choice.threshold;
      r.auroc += lm.auroc;
      r.aupr += lm.aupr;
      r.f1 += lm.f1;
      ++defined;
    }
    r.per_label.push_back(lm);
  }
  if (defined == 0) throw MetricError("no label has both classes on validation and target");
  r.auroc /= defined;
  r.aupr /= defined;
  r.f1 /= defined;
  return r;
}

double selection_auroc(const Matrix& scores, const Matrix& labels) {
  double sum = 0.0;
  int defined = 0;
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    auto col = column(scores, labels, c);
    if (!both_classes(col.labels)) continue;
    sum += auroc(col.scores, col.labels);
    ++defined;
  }
  if (defined == 0) throw MetricError("AUROC undefined: every label holds a single class");
  return sum / defined;
}

}  // namespace ctpd::metrics
