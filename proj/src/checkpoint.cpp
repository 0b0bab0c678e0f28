#include "ctpd/checkpoint.hpp"

#include "ctpd/error.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ctpd::checkpoint {

using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic{'C', 'T', 'P', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw SchemaError("truncated checkpoint " + path.string());
  return v;
}

json stats_to_json(const data::NormStats& norm) {
  json j;
  j["continuous"] = json::object();
  for (const auto& [name, s] : norm.continuous) j["continuous"][name] = {s.mean, s.stddev};
  j["categorical"] = json::object();
  for (const auto& [name, c] : norm.categorical)
    j["categorical"][name] = {{"codes", c.codes}, {"mean", c.code_stats.mean}, {"stddev", c.code_stats.stddev}};
  return j;
}

data::NormStats stats_from_json(const json& j) {
  data::NormStats norm;
  for (const auto& [name, v] : j.at("continuous").items())
    norm.continuous[name] = {v.at(0).get<double>(), v.at(1).get<double>()};
  for (const auto& [name, v] : j.at("categorical").items()) {
    data::CategoricalCodes c;
    c.codes = v.at("codes").get<std::map<std::string, int>>();
    c.code_stats = {v.at("mean").get<double>(), v.at("stddev").get<double>()};
    norm.categorical[name] = c;
  }
  return norm;
}

// JSON has no infinities; a null threshold means "predict everything positive"
json threshold_json(double t) { return std::isfinite(t) ? json(t) : json(nullptr); }
double threshold_value(const json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void save_params(const std::filesystem::path& path, const ParameterStore& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put(out, kVersion);
  put(out, static_cast<std::uint64_t>(store.size()));
  for (auto id : store.all()) {
    const auto& name = store.name(id);
    const auto& m = store.value(id);
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::int64_t>(m.rows()));
    put(out, static_cast<std::int64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing " + path.string());
}

void load_params(const std::filesystem::path& path, ParameterStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw SchemaError(path.string() + " is not a checkpoint file");
  if (take<std::uint32_t>(in, path) != kVersion) throw SchemaError("unsupported checkpoint version");
  const auto count = take<std::uint64_t>(in, path);
  if (count != store.size())
    throw SchemaError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                      std::to_string(store.size()));
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(take<std::uint32_t>(in, path), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = take<std::int64_t>(in, path);
    const auto cols = take<std::int64_t>(in, path);
    auto id = store.find(name);
    if (!id) throw SchemaError("checkpoint parameter '" + name + "' not in model");
    auto& m = store.value(*id);
    if (m.rows() != rows || m.cols() != cols)
      throw SchemaError("checkpoint parameter '" + name + "' has a different shape");
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw SchemaError("truncated checkpoint " + path.string());
  }
}

std::vector<std::string> history_columns() {
  return {"epoch",    "loss_total", "loss_pred", "loss_tpnce", "loss_recon_ts", "loss_recon_text",
          "loss_recon", "val_auroc", "val_aupr", "val_f1",   "learning_rate", "seconds"};
}

void write_history_csv(const std::filesystem::path& path, const training::TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const auto cols = history_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n' << std::setprecision(17);
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << e.train.total << ',' << e.train.pred << ',' << e.train.tpnce << ','
        << e.train.recon_ts << ',' << e.train.recon_text << ',' << e.train.recon << ',' << e.val_auroc
        << ',' << e.val_aupr << ',' << e.val_f1 << ',' << e.learning_rate << ',' << e.seconds << '\n';
  }
}

json report_to_json(const metrics::MetricsReport& r) {
  json j{{"auroc", r.auroc}, {"aupr", r.aupr}, {"f1", r.f1}, {"threshold", threshold_json(r.threshold)},
         {"macro", r.macro}};
  if (!r.per_label.empty()) {
    j["per_label"] = json::array();
    for (const auto& l : r.per_label)
      j["per_label"].push_back({{"label", l.label}, {"defined", l.defined}, {"auroc", l.auroc},
                                {"aupr", l.aupr}, {"f1", l.f1}, {"threshold", threshold_json(l.threshold)}});
  }
  return j;
}

metrics::MetricsReport report_from_json(const json& j) {
  metrics::MetricsReport r;
  r.auroc = j.at("auroc").get<double>();
  r.aupr = j.at("aupr").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.threshold = threshold_value(j.at("threshold"));
  r.macro = j.at("macro").get<bool>();
  if (j.contains("per_label")) {
    for (const auto& l : j.at("per_label")) {
      metrics::LabelMetrics m;
      m.label = l.at("label").get<int>();
      m.defined = l.at("defined").get<bool>();
      m.auroc = l.at("auroc").get<double>();
      m.aupr = l.at("aupr").get<double>();
      m.f1 = l.at("f1").get<double>();
      m.threshold = threshold_value(l.at("threshold"));
      r.per_label.push_back(m);
    }
  }
  return r;
}

void save(const std::filesystem::path& dir, const CtpdModel& model, const RunConfig& config,
          const training::TrainHistory& history, const metrics::MetricsReport& validation,
          const data::NormStats& norm) {
  std::filesystem::create_directories(dir);
  save_params(dir / "params.bin", model.params());
  write_history_csv(dir / "history.csv", history);
  json m{{"format", "ctpd-checkpoint"},
         {"version", kVersion},
         {"config", render_config(config)},
         {"config_hash", config_hash(config)},
         {"variables", model.config().variables},
         {"epoch", history.best_epoch},
         {"steps", history.steps},
         {"validation", report_to_json(validation)},
         {"norm_stats", stats_to_json(norm)},
         {"history_columns", history_columns()},
         {"parameter_count", model.params().total_elements()}};
  std::ofstream out(dir / "manifest.json");
  out << m.dump(2) << '\n';
  if (!out) throw Error("cannot write manifest in " + dir.string());
}

Loaded load(const std::filesystem::path& dir) {
  json m;
  try {
    m = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw SchemaError("bad manifest in " + dir.string() + ": " + e.what());
  }
  Loaded l;
  try {
    l.manifest.config_text = m.at("config").get<std::string>();
    l.manifest.config_hash = m.at("config_hash").get<std::string>();
    l.manifest.variables = m.at("variables").get<int>();
    l.manifest.epoch = m.at("epoch").get<int>();
    l.manifest.validation = report_from_json(m.at("validation"));
    l.manifest.norm = stats_from_json(m.at("norm_stats"));
  } catch (const json::exception& e) {
    throw SchemaError("bad manifest in " + dir.string() + ": " + e.what());
  }
  l.config = parse_config_text(l.manifest.config_text);
  if (config_hash(l.config) != l.manifest.config_hash)
    throw SchemaError("manifest config hash mismatch in " + dir.string());
  ModelConfig mc = l.config.model;
  mc.variables = l.manifest.variables;
  l.model = std::make_unique<CtpdModel>(mc, l.config.train.seed);
  load_params(dir / "params.bin", l.model->params());
  return l;
}

}  // namespace ctpd::checkpoint
