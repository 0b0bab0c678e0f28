#include "ctpd/prototype_report.hpp"

#include "ctpd/error.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace ctpd::report {

std::vector<TokenSpan> ts_token_spans(const ModelConfig& config) {
  const double step = config.window_hours / config.grid_size;
  std::vector<TokenSpan> spans;
  const int scales = config.use_multiscale ? static_cast<int>(discovery::MultiScale::kWindows.size()) : 1;
  for (int s = 0; s < scales; ++s) {
    const int w = discovery::MultiScale::kWindows[static_cast<std::size_t>(s)];
    for (int a = 0; a < config.grid_size / w; ++a)
      spans.push_back({s, a * w * step, (a + 1) * w * step});
  }
  return spans;
}

AdmissionView explain(const CtpdModel& model, const SampleInputs& sample, int top) {
  const auto& cfg = model.config();
  if (!cfg.use_prototypes) throw ConfigError("the checkpoint was trained without prototypes");
  ad::Tape tape;
  nn::Graph g{tape, model.params()};
  auto f = model.forward(g, sample, discovery::Mode::eval, Matrix(), false);
  const Matrix beta = model.importance(g, f.g_ts, f.g_text).value();  // 1 x K
  const Matrix& wts = f.discovery.w_ts.value();
  const Matrix& wtext = f.discovery.w_text.value();
  const auto spans = ts_token_spans(cfg);

  AdmissionView view;
  view.id = sample.id;
  view.grid_hours = model.grid().points;
  for (int k = 0; k < cfg.k_prototypes; ++k) {
    PrototypeView p;
    p.index = k;
    p.beta = beta(0, k);
    for (Eigen::Index j = 0; j < wts.cols(); ++j) p.ts_weights.push_back(wts(k, j));
    for (Eigen::Index j = 0; j < wtext.cols(); ++j) p.text_weights.push_back(wtext(k, j));
    std::vector<std::size_t> order(p.ts_weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return p.ts_weights[a] > p.ts_weights[b]; });
    for (int t = 0; t < std::min<int>(top, static_cast<int>(order.size())); ++t)
      p.top_windows.push_back({spans[order[static_cast<std::size_t>(t)]], p.ts_weights[order[static_cast<std::size_t>(t)]]});
    view.prototypes.push_back(std::move(p));
  }
  return view;
}

double mass_within(const PrototypeView& view, const std::vector<TokenSpan>& spans, double start,
                   double end) {
  double mass = 0.0;
  for (std::size_t j = 0; j < spans.size(); ++j) {
    const auto& s = spans[j];
    const double overlap = std::max(0.0, std::min(end, s.end_hours) - std::max(start, s.start_hours));
    mass += view.ts_weights[j] * overlap / (s.end_hours - s.start_hours);
  }
  return mass;
}

nlohmann::json to_json(const AdmissionView& view, const std::vector<TokenSpan>& spans) {
  nlohmann::json j{{"id", view.id}, {"grid_hours", view.grid_hours}};
  j["ts_tokens"] = nlohmann::json::array();
  for (const auto& s : spans)
    j["ts_tokens"].push_back({{"scale", s.scale}, {"start_hours", s.start_hours}, {"end_hours", s.end_hours}});
  j["prototypes"] = nlohmann::json::array();
  for (const auto& p : view.prototypes) {
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& w : p.top_windows)
      windows.push_back({{"scale", w.span.scale},
                         {"start_hours", w.span.start_hours},
                         {"end_hours", w.span.end_hours},
                         {"weight", w.weight}});
    j["prototypes"].push_back({{"index", p.index},
                               {"beta", p.beta},
                               {"ts_attention", p.ts_weights},
                               {"text_attention", p.text_weights},
                               {"top_windows", windows}});
  }
  return j;
}

std::string render_svg(const AdmissionView& view, const std::vector<TokenSpan>& spans) {
  const int scales = spans.empty() ? 0 : spans.back().scale + 1;
  const int rows_per = scales + 1;  // TS scales, then text
  const double window = spans.empty() ? 1.0 : spans.back().end_hours;
  const double left = 90, width = 600, cell_h = 10, gap = 6;
  const double height = 30 + view.prototypes.size() * (rows_per * cell_h + gap);
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"9\">\n",
                left + width + 20, height);
  os << buf << "<text x=\"4\" y=\"14\">" << view.id << " (darker = more attention)</text>\n";
  double y = 24;
  for (const auto& p : view.prototypes) {
    std::snprintf(buf, sizeof buf, "<text x=\"4\" y=\"%.1f\">P%d beta=%.2f</text>\n", y + cell_h, p.index, p.beta);
    os << buf;
    std::vector<double> peak(static_cast<std::size_t>(scales), 1e-12);
    for (std::size_t j = 0; j < spans.size(); ++j)
      peak[static_cast<std::size_t>(spans[j].scale)] = std::max(peak[static_cast<std::size_t>(spans[j].scale)], p.ts_weights[j]);
    for (std::size_t j = 0; j < spans.size(); ++j) {
      const auto& s = spans[j];
      const double shade = p.ts_weights[j] / peak[static_cast<std::size_t>(s.scale)];
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"rgb(20,60,160)\" "
                    "fill-opacity=\"%.3f\"/>\n",
                    left + width * s.start_hours / window, y + s.scale * cell_h,
                    width * (s.end_hours - s.start_hours) / window, cell_h - 1, shade);
      os << buf;
    }
    const double text_peak = std::max(1e-12, *std::max_element(p.text_weights.begin(), p.text_weights.end()));
    const double step = window / static_cast<double>(p.text_weights.size());
    for (std::size_t j = 0; j < p.text_weights.size(); ++j) {
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"rgb(170,60,20)\" "
                    "fill-opacity=\"%.3f\"/>\n",
                    left + width * (j * step) / window, y + scales * cell_h, width * step / window,
                    cell_h - 1, p.text_weights[j] / text_peak);
      os << buf;
    }
    y += rows_per * cell_h + gap;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace ctpd::report
