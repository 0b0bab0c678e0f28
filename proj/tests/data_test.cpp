#include "ctpd/data.hpp"
#include "ctpd/error.hpp"
#include "ctpd/metrics.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

using namespace ctpd;
using namespace ctpd::data;

namespace {

std::vector<VariableSpec> two_vars() {
  return {{"heart_rate", VariableKind::continuous, {}, "bpm"},
          {"capillary_refill_rate", VariableKind::categorical, {"none", "brisk"}, ""}};
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

const char* kValid =
    R"({"id":"a1","subject_id":"s1","window_hours":48,"series":{"heart_rate":[[3.0,80],[1.0,90]]},)"
    R"("notes":[{"t":2.0,"text":"stable"}],"labels":{"mortality":0}})";

}  // namespace

TEST(VariableSpec, DefaultHasFiveCategoricalAndTwelveContinuous) {
  auto specs = default_clinical_variables();
  ASSERT_EQ(specs.size(), 17u);
  int cat = 0;
  for (const auto& s : specs) {
    if (s.kind == VariableKind::categorical) {
      ++cat;
      EXPECT_FALSE(s.levels.empty());
      EXPECT_EQ(std::set<std::string>(s.levels.begin(), s.levels.end()).size(), s.levels.size());
    }
  }
  EXPECT_EQ(cat, 5);
  EXPECT_NO_THROW(validate_variable_spec(specs));
}

TEST(VariableSpec, RejectsDuplicateLevels) {
  std::vector<VariableSpec> specs{{"x", VariableKind::categorical, {"a", "a"}, ""}};
  EXPECT_THROW(validate_variable_spec(specs), Error);
}

TEST(VariableSpec, FileRoundTrip) {
  test::TempDir dir("spec");
  auto specs = default_clinical_variables();
  save_variable_spec(dir.path() / "v.json", specs);
  auto back = load_variable_spec(dir.path() / "v.json");
  ASSERT_EQ(back.size(), specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EXPECT_EQ(back[i].name, specs[i].name);
    EXPECT_EQ(back[i].kind, specs[i].kind);
    EXPECT_EQ(back[i].levels, specs[i].levels);
  }
}

TEST(LoadAdmissions, EmptyFileGivesEmptyList) {
  test::TempDir dir("adm");
  write_lines(dir.path() / "a.jsonl", {});
  EXPECT_TRUE(load_admissions(dir.path() / "a.jsonl", two_vars()).empty());
}

TEST(LoadAdmissions, SortsSeries) {
  test::TempDir dir("adm");
  write_lines(dir.path() / "a.jsonl", {kValid});
  auto recs = load_admissions(dir.path() / "a.jsonl", two_vars());
  ASSERT_EQ(recs.size(), 1u);
  const auto& hr = recs[0].series.at("heart_rate");
  ASSERT_EQ(hr.size(), 2u);
  EXPECT_DOUBLE_EQ(hr[0].time, 1.0);
  EXPECT_DOUBLE_EQ(hr[1].time, 3.0);
  EXPECT_DOUBLE_EQ(std::get<double>(hr[0].value), 90.0);
}

TEST(LoadAdmissions, OutOfWindowTimeNamesRecord) {
  test::TempDir dir("adm");
  write_lines(dir.path() / "a.jsonl",
              {R"({"id":"late","subject_id":"s","window_hours":48,"series":{"heart_rate":[[50.0,1]]},"notes":[],"labels":{"mortality":1}})"});
  try {
    load_admissions(dir.path() / "a.jsonl", two_vars());
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("late"), std::string::npos);
  }
}

TEST(LoadAdmissions, MalformedLineReportsLineNumber) {
  test::TempDir dir("adm");
  write_lines(dir.path() / "a.jsonl", {kValid, "{not json"});
  try {
    load_admissions(dir.path() / "a.jsonl", two_vars());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadAdmissions, UnknownVariableIsSchemaError) {
  test::TempDir dir("adm");
  write_lines(dir.path() / "a.jsonl",
              {R"({"id":"x","subject_id":"s","window_hours":48,"series":{"pulse":[[1.0,1]]},"notes":[],"labels":{"mortality":1}})"});
  EXPECT_THROW(load_admissions(dir.path() / "a.jsonl", two_vars()), SchemaError);
}

TEST(LoadAdmissions, BadLabelsRejected) {
  auto specs = two_vars();
  EXPECT_THROW(parse_admission(R"({"id":"x","subject_id":"s","window_hours":48,"series":{},"notes":[],"labels":{"mortality":2}})", specs, 1),
               ValidationError);
  EXPECT_THROW(parse_admission(R"({"id":"x","subject_id":"s","window_hours":48,"series":{},"notes":[],"labels":{"phenotypes":[0,1]}})", specs, 1),
               ValidationError);
}

TEST(LoadAdmissions, SerializeRoundTrip) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.n_admissions = 20;
  cfg.note_dim = 8;
  cfg.max_admissions_per_subject = 3;
  auto ds = generate_synthetic(cfg, specs);
  test::TempDir dir("rt");
  save_admissions(dir.path() / "a.jsonl", ds.records);
  auto back = load_admissions(dir.path() / "a.jsonl", specs);
  EXPECT_EQ(back, ds.records);
  save_admissions(dir.path() / "b.jsonl", back);
  EXPECT_EQ(load_admissions(dir.path() / "b.jsonl", specs), back);
}

TEST(NormStats, TwoPointStatistics) {
  auto specs = two_vars();
  auto r = test::record("a");
  r.series["heart_rate"] = {{1.0, 2.0}, {2.0, 4.0}};
  auto stats = compute_norm_stats({r}, specs);
  EXPECT_DOUBLE_EQ(stats.continuous.at("heart_rate").mean, 3.0);
  EXPECT_DOUBLE_EQ(stats.continuous.at("heart_rate").stddev, 1.0);
  EXPECT_EQ(stats.categorical.at("capillary_refill_rate").codes.at("none"), 0);
  EXPECT_EQ(stats.categorical.at("capillary_refill_rate").codes.at("brisk"), 1);
}

TEST(NormStats, UnobservedVariableFallsBack) {
  auto specs = two_vars();
  auto stats = compute_norm_stats({test::record("a")}, specs);
  EXPECT_DOUBLE_EQ(stats.continuous.at("heart_rate").mean, 0.0);
  EXPECT_DOUBLE_EQ(stats.continuous.at("heart_rate").stddev, 1.0);
}

TEST(NormStats, ConstantVariableGetsUnitDeviation) {
  auto specs = two_vars();
  auto r = test::record("a");
  r.series["heart_rate"] = {{1.0, 5.0}, {2.0, 5.0}};
  auto stats = compute_norm_stats({r}, specs);
  EXPECT_DOUBLE_EQ(stats.continuous.at("heart_rate").stddev, 1.0);
}

TEST(NormStats, EmptyTrainRejected) {
  EXPECT_THROW(compute_norm_stats({}, two_vars()), ValidationError);
}

TEST(Normalize, ContinuousAndCategorical) {
  NormStats stats;
  stats.continuous["heart_rate"] = {3.0, 1.0};
  CategoricalCodes codes;
  codes.codes = {{"none", 0}, {"brisk", 1}};
  codes.code_stats = {0.5, 0.5};
  stats.categorical["capillary_refill_rate"] = codes;
  auto r = test::record("a");
  r.series["heart_rate"] = {{1.0, 4.0}, {2.0, 3.0}};
  r.series["capillary_refill_rate"] = {{1.0, std::string("brisk")}};
  auto n = normalize(r, stats);
  EXPECT_DOUBLE_EQ(std::get<double>(n.series.at("heart_rate")[0].value), 1.0);
  EXPECT_DOUBLE_EQ(std::get<double>(n.series.at("heart_rate")[1].value), 0.0);
  EXPECT_DOUBLE_EQ(std::get<double>(n.series.at("capillary_refill_rate")[0].value), 1.0);

  r.series["capillary_refill_rate"] = {{1.0, std::string("sluggish")}};
  EXPECT_THROW(normalize(r, stats), ValidationError);
}

TEST(Normalize, TrainingSplitIsStandardized) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.n_admissions = 60;
  cfg.note_dim = 8;
  auto ds = generate_synthetic(cfg, specs);
  auto stats = compute_norm_stats(ds.records, specs);
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& r : ds.records) {
    auto n = normalize(r, stats);
    for (const auto& [name, obs] : n.series)
      for (const auto& o : obs) pooled[name].push_back(std::get<double>(o.value));
  }
  for (const auto& s : specs) {
    if (s.kind != VariableKind::continuous) continue;
    const auto& v = pooled.at(s.name);
    double mean = 0, sq = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    for (double x : v) sq += (x - mean) * (x - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9) << s.name;
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(v.size())), 1.0, 1e-9) << s.name;
  }
}

TEST(Split, TenSubjectsGiveSevenOneTwo) {
  std::vector<AdmissionRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(test::record("a" + std::to_string(i)));
  auto s = split_by_subject(recs, {}, 3);
  EXPECT_EQ(s.train.size(), 7u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 2u);
}

TEST(Split, SubjectsNeverLeakAndSplitIsDeterministic) {
  std::vector<AdmissionRecord> recs;
  for (int i = 0; i < 40; ++i)
    recs.push_back(test::record("a" + std::to_string(i), "s" + std::to_string(i / 3)));
  auto a = split_by_subject(recs, {}, 11);
  auto b = split_by_subject(recs, {}, 11);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  auto subjects = [](const std::vector<AdmissionRecord>& r) {
    std::set<std::string> s;
    for (const auto& x : r) s.insert(x.subject_id);
    return s;
  };
  auto tr = subjects(a.train), va = subjects(a.validation), te = subjects(a.test);
  for (const auto& s : va) EXPECT_FALSE(tr.count(s) || te.count(s));
  for (const auto& s : te) EXPECT_FALSE(tr.count(s));
  EXPECT_EQ(a.train.size() + a.validation.size() + a.test.size(), recs.size());
}

TEST(Split, Errors) {
  std::vector<AdmissionRecord> recs{test::record("a"), test::record("b")};
  EXPECT_THROW(split_by_subject(recs, {}, 0), ValidationError);
  recs.push_back(test::record("c"));
  EXPECT_THROW(split_by_subject(recs, {0.5, 0.5, 0.5}, 0), ConfigError);
}

TEST(Synthetic, SeededDeterminism) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.seed = 7;
  cfg.n_admissions = 30;
  cfg.note_dim = 16;
  test::TempDir dir("syn");
  save_synthetic(dir.path() / "a.jsonl", generate_synthetic(cfg, specs));
  save_synthetic(dir.path() / "b.jsonl", generate_synthetic(cfg, specs));
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir.path() / "a.jsonl"), slurp(dir.path() / "b.jsonl"));
  EXPECT_EQ(slurp(dir.path() / "a.jsonl.motifs"), slurp(dir.path() / "b.jsonl.motifs"));
  auto truth = load_motif_sidecar(motif_sidecar_path(dir.path() / "a.jsonl"));
  EXPECT_EQ(truth.size(), 30u);
}

TEST(Synthetic, PresenceLabelsAreSeparableByIndicator) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.n_admissions = 200;
  cfg.note_dim = 8;
  auto ds = generate_synthetic(cfg, specs);
  std::vector<double> indicator;
  std::vector<int> labels;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& m = ds.truth[i].motifs;
    indicator.push_back(std::find(m.begin(), m.end(), 0) != m.end() ? 1.0 : 0.0);
    labels.push_back(ds.records[i].labels.binary_label);
    validate_record(ds.records[i], specs);
  }
  EXPECT_DOUBLE_EQ(metrics::auroc(indicator, labels), 1.0);
}

TEST(Synthetic, TimingLabelsFollowOnsetOrder) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.n_admissions = 100;
  cfg.note_dim = 8;
  cfg.label_rule = LabelRule::motif_timing_binary;
  auto ds = generate_synthetic(cfg, specs);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& t = ds.truth[i];
    ASSERT_EQ(t.motifs.size(), 2u);
    EXPECT_EQ(ds.records[i].labels.binary_label, t.onsets[0] < t.onsets[1] ? 1 : 0);
  }
}

TEST(Synthetic, OverlapLabelsFollowOnsetGap) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.n_admissions = 200;
  cfg.note_dim = 8;
  cfg.label_rule = LabelRule::motif_overlap_binary;
  auto ds = generate_synthetic(cfg, specs);
  int positives = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& t = ds.truth[i];
    ASSERT_EQ(t.motifs.size(), 2u);
    const int expect = std::abs(t.onsets[0] - t.onsets[1]) < cfg.motif_length_hours ? 1 : 0;
    EXPECT_EQ(ds.records[i].labels.binary_label, expect);
    positives += expect;
  }
  // onsets uniform on [0, 36]: P(|gap| < 12) = 5/9
  EXPECT_GT(positives, 80);
  EXPECT_LT(positives, 140);
  EXPECT_EQ(parse_label_rule("motif-overlap-binary"), LabelRule::motif_overlap_binary);
  EXPECT_EQ(to_string(LabelRule::motif_overlap_binary), "motif-overlap-binary");
}

TEST(Synthetic, MultilabelHasTwentyFiveEntries) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.n_admissions = 10;
  cfg.note_dim = 8;
  cfg.label_rule = LabelRule::motif_subset_multilabel;
  for (const auto& r : generate_synthetic(cfg, specs).records) {
    EXPECT_EQ(r.labels.task, Task::multilabel);
    EXPECT_EQ(r.labels.multilabel.size(), static_cast<std::size_t>(kPhenotypeCount));
  }
}

TEST(Synthetic, ZeroNoiseGivesIdenticalCurves) {
  auto specs = default_clinical_variables();
  SyntheticConfig cfg;
  cfg.n_admissions = 60;
  cfg.noise_std = 0.0;
  cfg.note_dim = 8;
  auto ds = generate_synthetic(cfg, specs);
  // With one motif, value = baseline + amplitude * shape(u). The baseline is
  // read outside the motif window; the implied amplitude must then agree
  // across all admissions carrying that motif.
  std::map<std::string, double> baseline;
  std::map<std::pair<int, std::string>, double> amplitude;
  int compared = 0;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
      const auto& t = ds.truth[i];
      if (t.motifs.size() != 1) continue;
      const int m = t.motifs[0];
      for (const auto& [name, obs] : ds.records[i].series) {
        auto spec = std::find_if(specs.begin(), specs.end(), [&](const auto& s) { return s.name == name; });
        if (spec->kind != VariableKind::continuous) continue;
        for (const auto& o : obs) {
          const double v = std::get<double>(o.value);
          const double shape = motif_shape(m, (o.time - t.onsets[0]) / t.length_hours);
          if (pass == 0) {
            if (shape == 0.0) {
              auto [it, fresh] = baseline.emplace(name, v);
              EXPECT_NEAR(v, it->second, 1e-9) << name;
            }
          } else if (std::abs(shape) > 0.1 && baseline.count(name)) {
            const double a = (v - baseline.at(name)) / shape;
            auto [it, fresh] = amplitude.emplace(std::make_pair(m, name), a);
            if (!fresh) {
              EXPECT_NEAR(a, it->second, 1e-6) << name;
              ++compared;
            }
          }
        }
      }
    }
  }
  EXPECT_GT(compared, 10);
}

TEST(Synthetic, ConfigValidation) {
  SyntheticConfig cfg;
  cfg.n_motifs = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.observation_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Embedder, DeterministicShapedAndEmptyIsZero) {
  HashingEmbedder a(16, 5), b(16, 5);
  auto va = a.embed("blood pressure dropping overnight");
  EXPECT_EQ(va, b.embed("blood pressure dropping overnight"));
  EXPECT_EQ(va.size(), 16u);
  double norm = 0;
  for (double x : va) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  for (double x : a.embed("")) EXPECT_EQ(x, 0.0);
}

TEST(Embedder, EmbedNotesResolvesAndChecks) {
  HashingEmbedder e(4, 0);
  auto r = test::record("a");
  r.notes.push_back({1.0, std::string("note"), std::nullopt});
  r.notes.push_back({2.0, std::nullopt, std::vector<double>{1, 2, 3, 4}});
  auto out = embed_notes(r, e);
  ASSERT_TRUE(out.notes[0].embedding.has_value());
  EXPECT_EQ(*out.notes[1].embedding, (std::vector<double>{1, 2, 3, 4}));

  r.notes.push_back({3.0, std::nullopt, std::nullopt});
  EXPECT_THROW(embed_notes(r, e), ValidationError);
  r.notes.pop_back();
  r.notes.push_back({3.0, std::nullopt, std::vector<double>{1, 2}});
  EXPECT_THROW(embed_notes(r, e), ValidationError);
}
