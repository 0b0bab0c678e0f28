#include "ctpd/data.hpp"
#include "ctpd/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace ctpd::data {

std::string to_string(LabelRule rule) {
  switch (rule) {
    case LabelRule::motif_presence_binary: return "motif-presence-binary";
    case LabelRule::motif_subset_multilabel: return "motif-subset-multilabel";
    case LabelRule::motif_timing_binary: return "motif-timing-binary";
    case LabelRule::motif_overlap_binary: return "motif-overlap-binary";
  }
  return "?";
}

LabelRule parse_label_rule(const std::string& text) {
  if (text == "motif-presence-binary") return LabelRule::motif_presence_binary;
  if (text == "motif-subset-multilabel") return LabelRule::motif_subset_multilabel;
  if (text == "motif-timing-binary") return LabelRule::motif_timing_binary;
  if (text == "motif-overlap-binary") return LabelRule::motif_overlap_binary;
  throw ConfigError("unknown label rule '" + text + "'");
}

void SyntheticConfig::validate() const {
  if (n_admissions < 0) throw ConfigError("synthetic.n_admissions must be non-negative");
  if (n_motifs < 2) throw ConfigError("synthetic.n_motifs must be at least 2");
  if (!(observation_rate > 0.0)) throw ConfigError("synthetic.observation_rate must be positive");
  if (!(motif_length_hours > 0.0) || motif_length_hours > window_hours)
    throw ConfigError("synthetic.motif_length_hours must lie in (0, window_hours]");
  if (note_rate < 0.0) throw ConfigError("synthetic.note_rate must be non-negative");
  if (noise_std < 0.0) throw ConfigError("synthetic.noise_std must be non-negative");
  if (!(window_hours > 0.0)) throw ConfigError("synthetic.window_hours must be positive");
  if (note_dim < 1) throw ConfigError("synthetic.note_dim must be positive");
  if (max_admissions_per_subject < 1)
    throw ConfigError("synthetic.max_admissions_per_subject must be at least 1");
}

double motif_shape(int motif, double u) {
  if (u < 0.0 || u > 1.0) return 0.0;
  const double sign = (motif / 4) % 2 == 0 ? 1.0 : -1.0;
  switch (motif % 4) {
    case 0: return sign * u;                                   // ramp
    case 1: return -sign * std::sin(std::numbers::pi * u);     // dip
    case 2: return sign * std::sin(4.0 * std::numbers::pi * u);  // oscillation
    default: return sign * (u > 0.2 && u < 0.8 ? 1.0 : 0.0);   // plateau
  }
}

namespace {

struct Baseline {
  double mean = 0.0;
  double sd = 1.0;
};

Baseline continuous_baseline(const std::string& name) {
  static const std::map<std::string, Baseline> table{
      {"diastolic_blood_pressure", {60.0, 12.0}}, {"fraction_inspired_oxygen", {0.4, 0.1}},
      {"glucose", {130.0, 40.0}},                 {"heart_rate", {85.0, 15.0}},
      {"height", {170.0, 10.0}},                  {"mean_blood_pressure", {80.0, 12.0}},
      {"oxygen_saturation", {97.0, 2.0}},         {"respiratory_rate", {18.0, 4.0}},
      {"systolic_blood_pressure", {120.0, 18.0}}, {"temperature", {37.0, 0.6}},
      {"weight", {80.0, 15.0}},                   {"ph", {7.4, 0.05}},
  };
  auto it = table.find(name);
  return it == table.end() ? Baseline{} : it->second;
}

// Healthy level index for categorical variables; motifs push away from it.
double categorical_baseline(const VariableSpec& spec) {
  if (spec.name == "capillary_refill_rate") return 0.0;
  if (spec.name.starts_with("gcs_")) return static_cast<double>(spec.levels.size() - 1);
  return 0.0;
}

struct MotifTemplate {
  std::vector<double> effect;    // per variable, in sd units (continuous) or levels (categorical)
  std::vector<double> codebook;  // unit-norm note embedding centre
};

struct World {
  std::vector<MotifTemplate> motifs;
  std::vector<std::vector<int>> phenotype_subsets;
};

World make_world(const SyntheticConfig& cfg, const std::vector<VariableSpec>& specs) {
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    0xC7D0u};
  Rng rng(seq);
  std::vector<std::size_t> cont, cat;
  for (std::size_t j = 0; j < specs.size(); ++j)
    (specs[j].kind == VariableKind::continuous ? cont : cat).push_back(j);

  World w;
  std::uniform_real_distribution<double> amp(1.5, 2.5);
  std::uniform_real_distribution<double> shift(1.0, 2.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int m = 0; m < cfg.n_motifs; ++m) {
    MotifTemplate t;
    t.effect.assign(specs.size(), 0.0);
    auto pool = cont;
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t affected = std::min<std::size_t>(4, pool.size());
    for (std::size_t i = 0; i < affected; ++i) t.effect[pool[i]] = (coin(rng) ? 1.0 : -1.0) * amp(rng);
    if (!cat.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, cat.size() - 1);
      const auto j = cat[pick(rng)];
      const double dir = categorical_baseline(specs[j]) > 0.0 ? -1.0 : 1.0;
      t.effect[j] = dir * shift(rng);
    }
    t.codebook.resize(static_cast<std::size_t>(cfg.note_dim));
    double norm = 0.0;
    for (auto& x : t.codebook) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : t.codebook) x /= norm;
    w.motifs.push_back(std::move(t));
  }
  for (int l = 0; l < kPhenotypeCount; ++l) {
    std::vector<int> subset;
    while (subset.empty()) {
      for (int m = 0; m < cfg.n_motifs; ++m)
        if (coin(rng)) subset.push_back(m);
    }
    w.phenotype_subsets.push_back(std::move(subset));
  }
  return w;
}

double round_to(double x, double step) { return std::round(x / step) * step; }

std::string padded(char prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%06d", prefix, index);
  return buf;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg,
                                    const std::vector<VariableSpec>& specs) {
  cfg.validate();
  validate_variable_spec(specs);
  const World world = make_world(cfg, specs);
  const double W = cfg.window_hours;
  const double L = cfg.motif_length_hours;
  constexpr double keep = 0.6;  // per-variable thinning of chart events

  // subject assignment
  std::vector<std::string> subject_of;
  {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), 0x5B1Eu};
    Rng rng(seq);
    std::uniform_int_distribution<int> count(1, cfg.max_admissions_per_subject);
    int subject = 0;
    while (static_cast<int>(subject_of.size()) < cfg.n_admissions) {
      const int k = count(rng);
      for (int i = 0; i < k && static_cast<int>(subject_of.size()) < cfg.n_admissions; ++i)
        subject_of.push_back(padded('S', subject));
      ++subject;
    }
  }

  SyntheticDataset out;
  out.records.reserve(static_cast<std::size_t>(cfg.n_admissions));
  for (int a = 0; a < cfg.n_admissions; ++a) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(a), 0xAD31u};
    Rng rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);

    MotifTruth truth;
    truth.length_hours = L;
    if (cfg.label_rule == LabelRule::motif_timing_binary || cfg.label_rule == LabelRule::motif_overlap_binary) {
      for (int m = 0; m < cfg.n_motifs; ++m) truth.motifs.push_back(m);
    } else {
      while (truth.motifs.empty()) {
        for (int m = 0; m < cfg.n_motifs; ++m)
          if (coin(rng)) truth.motifs.push_back(m);
      }
    }
    for (std::size_t i = 0; i < truth.motifs.size(); ++i) truth.onsets.push_back(unit(rng) * (W - L));

    AdmissionRecord r;
    r.id = padded('A', a);
    r.subject_id = subject_of[static_cast<std::size_t>(a)];
    r.window_hours = W;
    truth.id = r.id;

    // chart event times
    std::poisson_distribution<int> n_events(cfg.observation_rate / keep * W);
    std::vector<double> events(static_cast<std::size_t>(n_events(rng)));
    for (auto& t : events) t = std::min(W, round_to(unit(rng) * W, 1e-3));
    std::sort(events.begin(), events.end());

    auto latent_at = [&](std::size_t j, double t, bool magnitude) {
      double s = 0.0;
      for (std::size_t i = 0; i < truth.motifs.size(); ++i) {
        const int m = truth.motifs[i];
        const double shape = motif_shape(m, (t - truth.onsets[i]) / L);
        s += world.motifs[static_cast<std::size_t>(m)].effect[j] * (magnitude ? std::abs(shape) : shape);
      }
      return s;
    };

    for (std::size_t j = 0; j < specs.size(); ++j) {
      const auto& spec = specs[j];
      const double offset = cfg.noise_std * normal(rng);
      std::vector<Observation> obs;
      for (double t : events) {
        if (unit(rng) >= keep) continue;
        const double noise = cfg.noise_std * normal(rng);
        if (spec.kind == VariableKind::continuous) {
          const auto base = continuous_baseline(spec.name);
          obs.push_back({t, base.mean + base.sd * (offset + latent_at(j, t, false) + noise)});
        } else {
          const double level = categorical_baseline(spec) + offset + latent_at(j, t, true) + noise;
          const auto top = static_cast<double>(spec.levels.size() - 1);
          const auto idx = static_cast<std::size_t>(std::clamp(std::round(level), 0.0, top));
          obs.push_back({t, spec.levels[idx]});
        }
      }
      if (!obs.empty()) r.series.emplace(spec.name, std::move(obs));
    }

    std::poisson_distribution<int> n_notes(cfg.note_rate);
    const int notes = std::max(1, n_notes(rng));
    std::uniform_int_distribution<std::size_t> pick(0, truth.motifs.size() - 1);
    const double noise_scale = cfg.noise_std / std::sqrt(static_cast<double>(cfg.note_dim));
    for (int k = 0; k < notes; ++k) {
      const auto i = pick(rng);
      const auto& code = world.motifs[static_cast<std::size_t>(truth.motifs[i])].codebook;
      NoteEvent note;
      note.time = std::clamp(round_to(truth.onsets[i] + unit(rng) * L, 1e-3), 0.0, W);
      std::vector<double> e(code.size());
      for (std::size_t d = 0; d < e.size(); ++d) e[d] = code[d] + noise_scale * normal(rng);
      note.embedding = std::move(e);
      r.notes.push_back(std::move(note));
    }
    std::stable_sort(r.notes.begin(), r.notes.end(),
                     [](const NoteEvent& x, const NoteEvent& y) { return x.time < y.time; });

    auto present = [&](int m) {
      return std::find(truth.motifs.begin(), truth.motifs.end(), m) != truth.motifs.end();
    };
    switch (cfg.label_rule) {
      case LabelRule::motif_presence_binary:
        r.labels.task = Task::binary;
        r.labels.binary_label = present(0) ? 1 : 0;
        break;
      case LabelRule::motif_timing_binary:
        r.labels.task = Task::binary;
        r.labels.binary_label = truth.onsets[0] < truth.onsets[1] ? 1 : 0;
        break;
      case LabelRule::motif_overlap_binary:
        r.labels.task = Task::binary;
        r.labels.binary_label = std::abs(truth.onsets[0] - truth.onsets[1]) < L ? 1 : 0;
        break;
      case LabelRule::motif_subset_multilabel:
        r.labels.task = Task::multilabel;
        for (const auto& subset : world.phenotype_subsets) {
          const bool any = std::any_of(subset.begin(), subset.end(), present);
          r.labels.multilabel.push_back(any ? 1 : 0);
        }
        break;
    }
    out.records.push_back(std::move(r));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

std::filesystem::path motif_sidecar_path(const std::filesystem::path& admissions_path) {
  auto p = admissions_path;
  p += ".motifs";
  return p;
}

void save_synthetic(const std::filesystem::path& path, const SyntheticDataset& dataset) {
  save_admissions(path, dataset.records);
  std::ofstream out(motif_sidecar_path(path));
  if (!out) throw Error("cannot write motif sidecar for " + path.string());
  for (const auto& t : dataset.truth) {
    nlohmann::json doc{{"id", t.id}, {"motifs", t.motifs}, {"onsets", t.onsets},
                       {"length_hours", t.length_hours}};
    out << doc.dump() << '\n';
  }
}

std::vector<MotifTruth> load_motif_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open motif sidecar: " + path.string());
  std::vector<MotifTruth> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto doc = nlohmann::json::parse(line);
      MotifTruth t;
      t.id = doc.at("id").get<std::string>();
      t.motifs = doc.at("motifs").get<std::vector<int>>();
      t.onsets = doc.at("onsets").get<std::vector<double>>();
      t.length_hours = doc.at("length_hours").get<double>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed motif record: ") + e.what(), number);
    }
  }
  return out;
}

}  // namespace ctpd::data
