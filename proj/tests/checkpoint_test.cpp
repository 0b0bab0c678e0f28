#include "ctpd/checkpoint.hpp"
#include "ctpd/error.hpp"
#include "support.hpp"
#include "tiny.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace ctpd;

TEST(Checkpoint, ParamsRoundTripExactly) {
  test::TempDir dir("params");
  CtpdModel a(test::tiny_config().model, 3), b(test::tiny_config().model, 4);
  checkpoint::save_params(dir.path() / "params.bin", a.params());
  checkpoint::load_params(dir.path() / "params.bin", b.params());
  for (auto id : a.params().all()) EXPECT_EQ(a.params().value(id), b.params().value(id)) << a.params().name(id);

  RunConfig other = test::tiny_config("[model]\nk_prototypes = 5\n");
  CtpdModel c(other.model, 0);
  EXPECT_THROW(checkpoint::load_params(dir.path() / "params.bin", c.params()), Error);
  std::ofstream(dir.path() / "junk.bin") << "junk";
  EXPECT_THROW(checkpoint::load_params(dir.path() / "junk.bin", b.params()), Error);
}

TEST(Checkpoint, SaveLoadReproducesValidationMetrics) {
  test::TempDir dir("ckpt");
  test::TinyRun run("max_epochs = 2\n");
  CtpdModel model(run.model_config(), 0);
  auto outcome = pipeline::train_and_evaluate(model, run.config, run.data);
  checkpoint::save(dir.path(), model, run.config, outcome.history, outcome.validation, run.data.norm);
  for (const char* f : {"params.bin", "manifest.json", "history.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;

  auto loaded = checkpoint::load(dir.path());
  EXPECT_EQ(loaded.manifest.config_hash, config_hash(run.config));
  EXPECT_EQ(loaded.manifest.epoch, outcome.history.best_epoch);
  EXPECT_EQ(render_config(loaded.config), render_config(run.config));
  for (auto id : model.params().all())
    EXPECT_EQ(model.params().value(id), loaded.model->params().value(id));

  auto again = pipeline::prepare(loaded.config, run.records, run.specs, &loaded.manifest.norm);
  auto report = training::evaluate_model(*loaded.model, again.validation, again.validation);
  EXPECT_NEAR(report.auroc, loaded.manifest.validation.auroc, 1e-9);
  EXPECT_NEAR(report.aupr, loaded.manifest.validation.aupr, 1e-9);
  EXPECT_NEAR(report.f1, loaded.manifest.validation.f1, 1e-9);

  std::ifstream csv(dir.path() / "history.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header.substr(0, 16), "epoch,loss_total");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, static_cast<int>(outcome.history.epochs.size()));
}

TEST(Checkpoint, MissingDirectoryIsAnError) {
  EXPECT_THROW(checkpoint::load("/nonexistent/checkpoint"), Error);
}

TEST(Checkpoint, ReportJsonRoundTrip) {
  metrics::MetricsReport r;
  r.auroc = 0.81;
  r.aupr = 0.7;
  r.f1 = 0.6;
  r.threshold = 0.35;
  r.macro = true;
  r.per_label.push_back({3, true, 0.9, 0.8, 0.7, 0.2});
  auto back = checkpoint::report_from_json(checkpoint::report_to_json(r));
  EXPECT_EQ(back.auroc, r.auroc);
  EXPECT_EQ(back.threshold, r.threshold);
  ASSERT_EQ(back.per_label.size(), 1u);
  EXPECT_EQ(back.per_label[0].label, 3);
  EXPECT_EQ(back.per_label[0].f1, 0.7);
}
