#include "ctpd/ablation.hpp"

#include "ctpd/checkpoint.hpp"
#include "ctpd/error.hpp"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace ctpd::ablation {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::string> preset(const std::string& name) {
  if (name == "components") return {"full", "no-prototypes", "no-timestamp-embeddings", "no-multiscale"};
  if (name == "losses") return {"full", "no-tpnce", "no-recon", "no-tpnce+no-recon"};
  if (name == "loss-weights")
    return {"lambda1=0.1+lambda2=0.1", "lambda1=0.1+lambda2=0.5", "lambda1=0.5+lambda2=0.5",
            "lambda1=1+lambda2=0.5",   "lambda1=1+lambda2=1",     "lambda1=1+lambda2=2"};
  if (name == "prototypes") return {"k=4", "k=8", "k=16", "k=32"};
  return {};
}

double number(const std::string& toggle, const std::string& text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("ablation toggle '" + toggle + "': bad number");
  return v;
}

}  // namespace

std::vector<Cell> parse_cells(const std::string& spec) {
  std::vector<Cell> cells;
  for (const auto& token : split(spec, ',')) {
    auto expanded = preset(token);
    if (expanded.empty()) expanded = {token};
    for (const auto& name : expanded) {
      Cell c{name, split(name, '+')};
      apply(c, RunConfig{});  // validates the toggles
      cells.push_back(c);
    }
  }
  if (cells.empty()) throw ConfigError("ablation grid has no cells");
  return cells;
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  for (const auto& t : split(spec, ',')) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) throw ConfigError("bad seed '" + t + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("no seeds given");
  return seeds;
}

RunConfig apply(const Cell& cell, const RunConfig& base) {
  RunConfig c = base;
  for (const auto& t : cell.toggles) {
    if (t == "full") continue;
    if (t == "no-prototypes") c.model.use_prototypes = false;
    else if (t == "no-timestamp-embeddings") c.model.use_timestamp_tokens = false;
    else if (t == "no-multiscale") c.model.use_multiscale = false;
    else if (t == "no-tpnce") c.model.use_tpnce = false;
    else if (t == "no-recon") c.model.use_recon = false;
    else if (t.starts_with("lambda1=")) c.model.lambda1 = number(t, t.substr(8));
    else if (t.starts_with("lambda2=")) c.model.lambda2 = number(t, t.substr(8));
    else if (t.starts_with("k=")) {
      const double k = number(t, t.substr(2));
      if (k != 4 && k != 8 && k != 16 && k != 32)
        throw ConfigError("ablation toggle '" + t + "': K must be one of 4, 8, 16, 32");
      c.model.k_prototypes = static_cast<int>(k);
    } else {
      throw ConfigError("unknown ablation toggle '" + t + "'");
    }
  }
  c.model.validate();
  return c;
}

std::vector<Row> run(const RunConfig& base, const std::vector<Cell>& cells,
                     const std::vector<std::uint64_t>& seeds,
                     const std::vector<data::AdmissionRecord>& records,
                     const std::vector<data::VariableSpec>& specs, const RowCallback& on_row) {
  const auto prepared = pipeline::prepare(base, records, specs);
  std::vector<Row> rows;
  for (const auto& cell : cells) {
    for (auto seed : seeds) {
      RunConfig cfg = apply(cell, base);
      cfg.train.seed = seed;
      spdlog::info("ablation cell '{}' seed {}", cell.name, seed);
      CtpdModel model(pipeline::model_config(cfg, prepared), seed);
      auto outcome = pipeline::train_and_evaluate(model, cfg, prepared);
      Row r{cell.name, seed, outcome.history.best_epoch,
            outcome.history.epochs.empty() ? 0.0 : outcome.history.epochs.back().seconds,
            outcome.validation, outcome.test};
      if (on_row) on_row(r);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::vector<Summary> summarize(const std::vector<Row>& rows) {
  std::vector<Summary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Summary& s) { return s.cell == r.cell; });
    if (it == out.end()) {
      out.push_back(Summary{r.cell});
    }
  }
  for (auto& s : out) {
    std::vector<const Row*> mine;
    for (const auto& r : rows)
      if (r.cell == s.cell) mine.push_back(&r);
    s.runs = mine.size();
    auto stats = [&](auto get, double& mean, double& sd) {
      mean = 0.0;
      for (auto* r : mine) mean += get(*r);
      mean /= static_cast<double>(mine.size());
      sd = 0.0;
      if (mine.size() > 1) {
        for (auto* r : mine) sd += (get(*r) - mean) * (get(*r) - mean);
        sd = std::sqrt(sd / static_cast<double>(mine.size() - 1));
      }
    };
    stats([](const Row& r) { return r.test.auroc; }, s.auroc_mean, s.auroc_std);
    stats([](const Row& r) { return r.test.aupr; }, s.aupr_mean, s.aupr_std);
    stats([](const Row& r) { return r.test.f1; }, s.f1_mean, s.f1_std);
  }
  return out;
}

nlohmann::json to_json(const std::vector<Row>& rows, const std::vector<Summary>& summary) {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"cell", r.cell},
                         {"seed", r.seed},
                         {"best_epoch", r.best_epoch},
                         {"seconds", r.seconds},
                         {"validation", checkpoint::report_to_json(r.validation)},
                         {"test", checkpoint::report_to_json(r.test)}});
  j["summary"] = nlohmann::json::array();
  for (const auto& s : summary)
    j["summary"].push_back({{"cell", s.cell},
                            {"runs", s.runs},
                            {"auroc_mean", s.auroc_mean},
                            {"auroc_std", s.auroc_std},
                            {"aupr_mean", s.aupr_mean},
                            {"aupr_std", s.aupr_std},
                            {"f1_mean", s.f1_mean},
                            {"f1_std", s.f1_std}});
  return j;
}

std::string render_table(const std::vector<Summary>& summary) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-36s %4s  %-15s  %-15s  %-15s\n", "cell", "runs", "AUROC", "AUPR", "F1");
  os << line;
  for (const auto& s : summary) {
    std::snprintf(line, sizeof line, "%-36s %4zu  %6.2f +- %5.2f  %6.2f +- %5.2f  %6.2f +- %5.2f\n",
                  s.cell.c_str(), s.runs, 100 * s.auroc_mean, 100 * s.auroc_std, 100 * s.aupr_mean,
                  100 * s.aupr_std, 100 * s.f1_mean, 100 * s.f1_std);
    os << line;
  }
  return os.str();
}

}  // namespace ctpd::ablation
