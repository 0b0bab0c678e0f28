// Command-line entry point: generate, train, eval, ablate, gradcheck,
// export-prototypes.

#include "ctpd/ablation.hpp"
#include "ctpd/checkpoint.hpp"
#include "ctpd/error.hpp"
#include "ctpd/gradcheck.hpp"
#include "ctpd/pipeline.hpp"
#include "ctpd/prototype_report.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctpd;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "configuration file (key = value)");
  cmd->add_option("--seed", c.seed, "overrides the seed of this stage");
  cmd->add_option("--out", c.out, "output directory (defaults to output_dir)");
}

RunConfig load_config(const Common& c) {
  return c.config.empty() ? parse_config_text("") : parse_config(c.config);
}

fs::path out_dir(const Common& c, const RunConfig& cfg) {
  fs::path dir = c.out.empty() ? fs::path(cfg.output_dir) : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

void echo_config(const fs::path& dir, const RunConfig& cfg) {
  write_text(dir / "resolved_config.conf", render_config(cfg));
}

int cmd_generate(const Common& c) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.data.synthetic.seed = *c.seed;
  cfg.resolve();
  const auto dir = out_dir(c, cfg);
  auto specs = pipeline::load_specs(cfg.data);
  auto ds = data::generate_synthetic(cfg.data.synthetic, specs);
  data::save_synthetic(dir / "admissions.jsonl", ds);
  data::save_variable_spec(dir / "variables.json", specs);
  echo_config(dir, cfg);
  std::cout << "wrote " << ds.records.size() << " admissions to " << (dir / "admissions.jsonl").string() << '\n';
  return 0;
}

int cmd_train(const Common& c) {
  RunConfig cfg = load_config(c);
  if (c.seed) cfg.train.seed = *c.seed;
  cfg.resolve();
  const auto dir = out_dir(c, cfg);
  echo_config(dir, cfg);
  auto specs = pipeline::load_specs(cfg.data);
  auto records = pipeline::load_records(cfg.data, specs);
  auto prepared = pipeline::prepare(cfg, records, specs);
  CtpdModel model(pipeline::model_config(cfg, prepared), cfg.train.seed);
  auto outcome = pipeline::train_and_evaluate(model, cfg, prepared);
  checkpoint::save(dir / "checkpoint", model, cfg, outcome.history, outcome.validation, prepared.norm);
  json m{{"validation", checkpoint::report_to_json(outcome.validation)},
         {"test", checkpoint::report_to_json(outcome.test)},
         {"best_epoch", outcome.history.best_epoch}};
  write_text(dir / "metrics.json", m.dump(2) + "\n");
  std::cout << "best epoch " << outcome.history.best_epoch << ": test AUROC " << outcome.test.auroc
            << " AUPR " << outcome.test.aupr << " F1 " << outcome.test.f1 << '\n';
  return 0;
}

checkpoint::Loaded load_checkpoint(const std::string& path, const Common& c) {
  fs::path p = path.empty() ? fs::path(c.out) / "checkpoint" : fs::path(path);
  return checkpoint::load(p);
}

pipeline::PreparedData data_for(const checkpoint::Loaded& ck) {
  auto specs = pipeline::load_specs(ck.config.data);
  auto records = pipeline::load_records(ck.config.data, specs);
  return pipeline::prepare(ck.config, records, specs, &ck.manifest.norm);
}

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& split) {
  auto ck = load_checkpoint(ckpt, c);
  auto prepared = data_for(ck);
  const std::vector<SampleInputs>* target = nullptr;
  if (split == "validation") target = &prepared.validation;
  else if (split == "test") target = &prepared.test;
  else if (split == "train") target = &prepared.train;
  else throw ConfigError("unknown split '" + split + "'");
  auto report = training::evaluate_model(*ck.model, prepared.validation, *target);
  json j = checkpoint::report_to_json(report);
  j["split"] = split;
  j["config_hash"] = ck.manifest.config_hash;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / ("eval_" + split + ".json"), j.dump(2) + "\n");
  }
  std::cout << j.dump() << '\n';
  return 0;
}

int cmd_ablate(const Common& c, const std::string& cells, const std::string& seeds) {
  RunConfig cfg = load_config(c);
  if (!cells.empty()) cfg.ablation.cells = cells;
  if (!seeds.empty()) cfg.ablation.seeds = seeds;
  if (c.seed) cfg.ablation.seeds = std::to_string(*c.seed);
  cfg.resolve();
  const auto dir = out_dir(c, cfg);
  echo_config(dir, cfg);
  auto grid = ablation::parse_cells(cfg.ablation.cells);
  auto seed_list = ablation::parse_seeds(cfg.ablation.seeds);
  auto specs = pipeline::load_specs(cfg.data);
  auto records = pipeline::load_records(cfg.data, specs);
  auto rows = ablation::run(cfg, grid, seed_list, records, specs);
  auto summary = ablation::summarize(rows);
  write_text(dir / "ablation.json", ablation::to_json(rows, summary).dump(2) + "\n");
  const auto table = ablation::render_table(summary);
  write_text(dir / "ablation.txt", table);
  std::cout << table;
  return 0;
}

int cmd_gradcheck(const Common& c, const std::vector<std::string>& wanted) {
  const std::uint64_t seed = c.seed.value_or(0);
  auto names = wanted.empty() ? gradcheck::components() : wanted;
  gradcheck::Options opt;
  json j = json::array();
  bool failed = false;
  for (const auto& name : names) {
    auto r = gradcheck::check_component(name, seed, opt);
    const bool bad = r.max_rel_error > opt.failure_threshold;
    failed = failed || bad;
    std::printf("%-16s coords %4zu  max rel err %.3e  %s\n", name.c_str(), r.coordinates,
                r.max_rel_error, bad ? "FAIL" : "ok");
    json worst = json::array();
    for (const auto& w : r.worst)
      worst.push_back({{"param", w.param}, {"row", w.row}, {"col", w.col}, {"analytic", w.analytic},
                       {"numeric", w.numeric}, {"rel_error", w.rel_error}});
    j.push_back({{"component", name}, {"coordinates", r.coordinates},
                 {"max_rel_error", r.max_rel_error}, {"worst", worst}});
  }
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    write_text(fs::path(c.out) / "gradcheck.json", j.dump(2) + "\n");
  }
  if (failed) throw NumericError("gradient check failed: relative error above 1e-3");
  return 0;
}

int cmd_export(const Common& c, const std::string& ckpt, const std::string& admissions,
               const std::vector<std::string>& ids, bool plots) {
  auto ck = load_checkpoint(ckpt, c);
  const auto& cfg = ck.config;
  auto specs = pipeline::load_specs(cfg.data);
  std::vector<data::AdmissionRecord> records;
  if (admissions.empty()) {
    records = data_for(ck).test_records;
  } else {
    data::HashingEmbedder embedder(cfg.data.note_dim, cfg.data.embedder_seed);
    for (const auto& r : data::load_admissions(admissions, specs))
      records.push_back(data::embed_notes(data::normalize(r, ck.manifest.norm), embedder));
  }
  std::vector<const data::AdmissionRecord*> chosen;
  if (ids.empty()) {
    for (const auto& r : records) chosen.push_back(&r);
  } else {
    for (const auto& id : ids) {
      auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == id; });
      if (it == records.end()) throw ValidationError("admission '" + id + "' not found");
      chosen.push_back(&*it);
    }
  }
  const fs::path dir = c.out.empty() ? fs::path(cfg.output_dir) : fs::path(c.out);
  fs::create_directories(dir);
  const auto spans = report::ts_token_spans(ck.model->config());
  json j = json::array();
  for (const auto* r : chosen) {
    auto sample = prepare_sample(*r, ck.model->grid(), specs, cfg.data.note_dim);
    auto view = report::explain(*ck.model, sample);
    j.push_back(report::to_json(view, spans));
    if (plots) {
      fs::create_directories(dir / "plots");
      write_text(dir / "plots" / (r->id + ".svg"), report::render_svg(view, spans));
    }
  }
  write_text(dir / "prototypes.json", j.dump(2) + "\n");
  std::cout << "exported " << chosen.size() << " admissions to " << (dir / "prototypes.json").string() << '\n';
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-based multimodal model for irregular clinical time series and notes"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "log training progress");

  Common common;
  std::string ckpt, split = "test", admissions, cells, seeds;
  std::vector<std::string> ids, components;
  bool plots = false;

  auto* generate = app.add_subcommand("generate", "write a synthetic cohort");
  add_common(generate, common);
  auto* train = app.add_subcommand("train", "train and checkpoint a model");
  add_common(train, common);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, common);
  eval->add_option("--checkpoint", ckpt, "checkpoint directory (default <out>/checkpoint)");
  eval->add_option("--split", split, "validation, test or train")->check(CLI::IsMember({"validation", "test", "train"}));
  auto* ablate = app.add_subcommand("ablate", "run the ablation grid");
  add_common(ablate, common);
  ablate->add_option("--cells", cells, "comma-separated cells or presets");
  ablate->add_option("--seeds", seeds, "comma-separated seeds");
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(grad, common);
  grad->add_option("--component", components, "component to check (repeatable)")
      ->check(CLI::IsMember(gradcheck::components()));
  auto* exportp = app.add_subcommand("export-prototypes", "export prototype attention maps");
  add_common(exportp, common);
  exportp->add_option("--checkpoint", ckpt, "checkpoint directory (default <out>/checkpoint)");
  exportp->add_option("--admissions", admissions, "admissions file (default: the test split)");
  exportp->add_option("--id", ids, "admission id (repeatable)");
  exportp->add_flag("--plots", plots, "also write one SVG per admission");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 2;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (*generate) return cmd_generate(common);
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, ckpt, split);
    if (*ablate) return cmd_ablate(common, cells, seeds);
    if (*grad) return cmd_gradcheck(common, components);
    if (*exportp) return cmd_export(common, ckpt, admissions, ids, plots);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 1;
}
