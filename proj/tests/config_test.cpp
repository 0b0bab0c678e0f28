#include "ctpd/config.hpp"
#include "ctpd/error.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace ctpd;

TEST(Config, EmptyFileGivesDefaults) {
  const RunConfig c = parse_config_text("");
  EXPECT_EQ(c.model.k_prototypes, 16);
  EXPECT_DOUBLE_EQ(c.model.lambda1, 0.1);
  EXPECT_DOUBLE_EQ(c.model.lambda2, 0.5);
  EXPECT_DOUBLE_EQ(c.model.temperature, 0.1);
  EXPECT_EQ(c.model.time_functions, 8);
  EXPECT_EQ(c.model.width, 128);
  EXPECT_EQ(c.data.grid_size, 24);
  EXPECT_DOUBLE_EQ(c.data.window_hours, 48.0);
  EXPECT_EQ(c.train.batch_size, 128);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 4e-5);
  EXPECT_EQ(c.model.grid_size, c.data.grid_size);
}

TEST(Config, SectionsCommentsAndOverrides) {
  const RunConfig c = parse_config_text(
      "# comment\n[model]\nk_prototypes = 8   # trailing\nlambda1 = 1\n\n[train]\nbatch_size=32\n"
      "[data]\ngrid.size = 16\npath = \"x.jsonl\"\n");
  EXPECT_EQ(c.model.k_prototypes, 8);
  EXPECT_DOUBLE_EQ(c.model.lambda1, 1.0);
  EXPECT_EQ(c.train.batch_size, 32);
  EXPECT_EQ(c.model.grid_size, 16);
  EXPECT_EQ(c.data.path, "x.jsonl");
  EXPECT_EQ(parse_config_text("model.k_prototypes = 4\n").model.k_prototypes, 4);
}

TEST(Config, UnknownKeyIsNamed) {
  try {
    parse_config_text("[model]\nk_prototyps = 8\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.k_prototyps"), std::string::npos);
  }
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_THROW(parse_config_text("model.k_prototypes = eight\n"), ConfigError);
  EXPECT_THROW(parse_config_text("model.k_prototypes = 8.5\n"), ConfigError);
  EXPECT_THROW(parse_config_text("model.use_tpnce = yes\n"), ConfigError);
  EXPECT_THROW(parse_config_text("model.k_prototypes = 1\n"), ConfigError);
  EXPECT_THROW(parse_config_text("data.grid.size = 10\n"), ConfigError);
  EXPECT_THROW(parse_config_text("data.split.train = 0.9\n"), ConfigError);
  EXPECT_THROW(parse_config_text("model.width = 10\nmodel.heads = 4\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[model\n"), ParseError);
  EXPECT_THROW(parse_config_text("model.width\n"), ParseError);
  EXPECT_THROW(parse_config("/nonexistent/run.conf"), ConfigError);
}

TEST(Config, RenderParseRoundTrip) {
  RunConfig c = parse_config_text("[model]\nk_prototypes = 32\ntemperature = 0.07\ntpnce_reduction = sum\n"
                                  "[train]\nlearning_rate = 3.3e-4\nseed = 9\n[ablation]\ncells = losses\n");
  const std::string text = render_config(c);
  const RunConfig back = parse_config_text(text);
  EXPECT_EQ(render_config(back), text);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(back.model.tpnce_reduction, objectives::Reduction::sum);
  EXPECT_EQ(back.train.learning_rate, 3.3e-4);
  // every key appears exactly once
  for (const auto& key : config_keys()) {
    const auto first = text.find(key + " = ");
    ASSERT_NE(first, std::string::npos) << key;
  }
  c.model.k_prototypes = 4;
  EXPECT_NE(config_hash(c), config_hash(back));
}

TEST(Config, ReadsFromFile) {
  test::TempDir dir("config");
  const auto path = dir.path() / "run.conf";
  std::ofstream(path) << "[train]\nmax_epochs = 7\n";
  EXPECT_EQ(parse_config(path).train.max_epochs, 7);
}

TEST(Config, ShippedExamplesParse) {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(CTPD_CONFIG_DIR)) {
    if (entry.path().extension() != ".conf") continue;
    EXPECT_NO_THROW(parse_config(entry.path())) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 1);
}
