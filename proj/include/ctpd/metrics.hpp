#pragma once

// Ranking and thresholded classification metrics.

#include "ctpd/parameters.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ctpd::metrics {

/// Probability that a random positive scores above a random negative; ties
/// count one half. Throws MetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over distinct thresholds (descending) of
/// (recall_n - recall_{n-1}) * precision_n, no interpolation.
/// Throws MetricError without positives.
double aupr(std::span<const double> scores, std::span<const int> labels);

/// 2 TP / (2 TP + FP + FN) when predicting positive for score >= threshold;
/// 0 when the denominator vanishes.
double f1_at(std::span<const double> scores, std::span<const int> labels, double threshold);

struct ThresholdChoice {
  double threshold = -std::numeric_limits<double>::infinity();
  double validation_f1 = 0.0;
  double f1 = 0.0;  // on the target split
};

/// Sweeps every distinct validation score plus -inf, keeps the threshold with
/// the best validation F1 (ties go to the lowest finite threshold) and reports
/// F1 at that threshold on the target split.
ThresholdChoice f1_best_threshold(std::span<const double> val_scores, std::span<const int> val_labels,
                                  std::span<const double> target_scores,
                                  std::span<const int> target_labels);

struct LabelMetrics {
  int label = 0;
  bool defined = false;  // both classes present in validation and target
  double auroc = 0.0;
  double aupr = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;
};

struct MetricsReport {
  double auroc = 0.0;
  double aupr = 0.0;
  double f1 = 0.0;
  double threshold = 0.0;  // binary only; per-label thresholds otherwise
  bool macro = false;
  std::vector<LabelMetrics> per_label;  // multilabel only
};

/// scores and labels are N x C. The F1 threshold is selected on validation
/// only. With C > 1, labels undefined on either split are skipped and the
/// macro averages run over the rest.
MetricsReport evaluate_scores(const Matrix& val_scores, const Matrix& val_labels,
                              const Matrix& target_scores, const Matrix& target_labels);

/// Early-stopping criterion: AUROC, macro over defined labels for C > 1.
double selection_auroc(const Matrix& scores, const Matrix& labels);

}  // namespace ctpd::metrics
