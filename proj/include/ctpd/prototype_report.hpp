#pragma once

// Per-admission view of the learned prototypes: where each one attends in
// time, in both modalities, and how much it weighs in the alignment score.

#include "ctpd/model.hpp"

#include <nlohmann/json.hpp>

namespace ctpd::report {

/// The grid interval (start, end] in hours covered by one TS token.
struct TokenSpan {
  int scale = 0;  // index into the pooling windows; 0 is the finest
  double start_hours = 0.0;
  double end_hours = 0.0;
};

std::vector<TokenSpan> ts_token_spans(const ModelConfig& config);

struct Window {
  TokenSpan span;
  double weight = 0.0;
};

struct PrototypeView {
  int index = 0;
  double beta = 0.0;  // importance on the admission's own (TS, text) pair
  std::vector<double> ts_weights;    // over TS tokens, sums to 1
  std::vector<double> text_weights;  // over the T grid points, sums to 1
  std::vector<Window> top_windows;   // heaviest TS tokens, descending
};

struct AdmissionView {
  std::string id;
  std::vector<double> grid_hours;
  std::vector<PrototypeView> prototypes;
};

/// Eval-mode explanation; throws ConfigError when prototypes are disabled.
AdmissionView explain(const CtpdModel& model, const SampleInputs& sample, int top = 3);

/// Attention mass of `view` inside (start, end], counting each TS token by
/// the overlap fraction of its span.
double mass_within(const PrototypeView& view, const std::vector<TokenSpan>& spans, double start,
                   double end);

nlohmann::json to_json(const AdmissionView& view, const std::vector<TokenSpan>& spans);
/// Heat map: one row per prototype and scale, columns over time.
std::string render_svg(const AdmissionView& view, const std::vector<TokenSpan>& spans);

}  // namespace ctpd::report
