#include "ctpd/config.hpp"

#include "ctpd/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

namespace ctpd {

namespace {

struct Field {
  std::string key;
  std::string type;  // for error messages
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

template <typename T>
T parse_number(const std::string& key, const std::string& text, const char* type) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("key '" + key + "': expected " + type + ", got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError("key '" + key + "': expected bool (true/false), got '" + text + "'");
}

template <typename T>
Field int_field(std::string key, T RunConfig::*section, int T::*member) {
  return {key, "int",
          [=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_number<int>(key, v, "int"); },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <typename T>
Field u64_field(std::string key, T RunConfig::*section, std::uint64_t T::*member) {
  return {key, "unsigned int",
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*member = parse_number<std::uint64_t>(key, v, "unsigned int");
          },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <typename T>
Field real_field(std::string key, T RunConfig::*section, double T::*member) {
  return {key, "real",
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*member = parse_number<double>(key, v, "real");
          },
          [=](const RunConfig& c) { return fmt_double((c.*section).*member); }};
}

template <typename T>
Field bool_field(std::string key, T RunConfig::*section, bool T::*member) {
  return {key, "bool",
          [=](RunConfig& c, const std::string& v) { (c.*section).*member = parse_bool(key, v); },
          [=](const RunConfig& c) { return std::string((c.*section).*member ? "true" : "false"); }};
}

template <typename T>
Field string_field(std::string key, T RunConfig::*section, std::string T::*member) {
  return {key, "string", [=](RunConfig& c, const std::string& v) { (c.*section).*member = v; },
          [=](const RunConfig& c) { return (c.*section).*member; }};
}

// sub-struct access for data.split and data.synthetic
template <typename Sub, typename M>
Field nested(std::string key, const char* type, Sub DataConfig::*sub, M Sub::*member,
             std::function<M(const std::string&, const std::string&)> parse,
             std::function<std::string(const M&)> show) {
  return {key, type,
          [=](RunConfig& c, const std::string& v) { (c.data.*sub).*member = parse(key, v); },
          [=](const RunConfig& c) { return show((c.data.*sub).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    using D = DataConfig;
    using M = ModelConfig;
    using T = training::TrainConfig;
    auto pd = [](const std::string& k, const std::string& v) { return parse_number<double>(k, v, "real"); };
    auto pi = [](const std::string& k, const std::string& v) { return parse_number<int>(k, v, "int"); };
    auto pu = [](const std::string& k, const std::string& v) {
      return parse_number<std::uint64_t>(k, v, "unsigned int");
    };
    std::function<std::string(const double&)> sd = [](const double& v) { return fmt_double(v); };
    std::function<std::string(const int&)> si = [](const int& v) { return std::to_string(v); };
    std::function<std::string(const std::uint64_t&)> su = [](const std::uint64_t& v) {
      return std::to_string(v);
    };
    using S = data::SyntheticConfig;
    using R = data::SplitRatios;
    std::vector<Field> f{
        string_field("data.path", &RunConfig::data, &D::path),
        string_field("data.variable_spec", &RunConfig::data, &D::variable_spec),
        int_field("data.grid.size", &RunConfig::data, &D::grid_size),
        real_field("data.grid.window_hours", &RunConfig::data, &D::window_hours),
        int_field("data.note_dim", &RunConfig::data, &D::note_dim),
        u64_field("data.embedder_seed", &RunConfig::data, &D::embedder_seed),
        nested<R, double>("data.split.train", "real", &D::split, &R::train, pd, sd),
        nested<R, double>("data.split.validation", "real", &D::split, &R::validation, pd, sd),
        nested<R, double>("data.split.test", "real", &D::split, &R::test, pd, sd),
        u64_field("data.split.seed", &RunConfig::data, &D::split_seed),
        nested<S, int>("data.synthetic.n_admissions", "int", &D::synthetic, &S::n_admissions, pi, si),
        nested<S, int>("data.synthetic.n_motifs", "int", &D::synthetic, &S::n_motifs, pi, si),
        nested<S, double>("data.synthetic.motif_length_hours", "real", &D::synthetic,
                          &S::motif_length_hours, pd, sd),
        nested<S, double>("data.synthetic.observation_rate", "real", &D::synthetic,
                          &S::observation_rate, pd, sd),
        nested<S, double>("data.synthetic.note_rate", "real", &D::synthetic, &S::note_rate, pd, sd),
        nested<S, data::LabelRule>(
            "data.synthetic.label_rule", "label rule", &D::synthetic, &S::label_rule,
            [](const std::string& k, const std::string& v) {
              try {
                return data::parse_label_rule(v);
              } catch (const Error& e) {
                throw ConfigError("key '" + k + "': " + e.what());
              }
            },
            [](const data::LabelRule& r) { return data::to_string(r); }),
        nested<S, double>("data.synthetic.noise_std", "real", &D::synthetic, &S::noise_std, pd, sd),
        nested<S, std::uint64_t>("data.synthetic.seed", "unsigned int", &D::synthetic, &S::seed, pu, su),
        nested<S, int>("data.synthetic.max_admissions_per_subject", "int", &D::synthetic,
                       &S::max_admissions_per_subject, pi, si),

        int_field("model.width", &RunConfig::model, &M::width),
        int_field("model.k_prototypes", &RunConfig::model, &M::k_prototypes),
        int_field("model.time_functions", &RunConfig::model, &M::time_functions),
        int_field("model.time_dim", &RunConfig::model, &M::time_dim),
        real_field("model.temperature", &RunConfig::model, &M::temperature),
        real_field("model.lambda1", &RunConfig::model, &M::lambda1),
        real_field("model.lambda2", &RunConfig::model, &M::lambda2),
        int_field("model.slot_iters", &RunConfig::model, &M::slot_iters),
        int_field("model.fusion_layers", &RunConfig::model, &M::fusion_layers),
        int_field("model.decoder_layers", &RunConfig::model, &M::decoder_layers),
        int_field("model.heads", &RunConfig::model, &M::heads),
        real_field("model.pos_weight", &RunConfig::model, &M::pos_weight),
        {"model.tpnce_reduction", "mean|sum",
         [](RunConfig& c, const std::string& v) {
           if (v == "mean") c.model.tpnce_reduction = objectives::Reduction::mean;
           else if (v == "sum") c.model.tpnce_reduction = objectives::Reduction::sum;
           else throw ConfigError("key 'model.tpnce_reduction': expected mean|sum, got '" + v + "'");
         },
         [](const RunConfig& c) {
           return std::string(c.model.tpnce_reduction == objectives::Reduction::mean ? "mean" : "sum");
         }},
        bool_field("model.per_pair_beta", &RunConfig::model, &M::per_pair_beta),
        bool_field("model.null_note", &RunConfig::model, &M::null_note),
        bool_field("model.use_prototypes", &RunConfig::model, &M::use_prototypes),
        bool_field("model.use_timestamp_tokens", &RunConfig::model, &M::use_timestamp_tokens),
        bool_field("model.use_multiscale", &RunConfig::model, &M::use_multiscale),
        bool_field("model.use_tpnce", &RunConfig::model, &M::use_tpnce),
        bool_field("model.use_recon", &RunConfig::model, &M::use_recon),

        {"train.task", "binary|multilabel",
         [](RunConfig& c, const std::string& v) {
           if (v == "binary") c.model.task = data::Task::binary;
           else if (v == "multilabel") c.model.task = data::Task::multilabel;
           else throw ConfigError("key 'train.task': expected binary|multilabel, got '" + v + "'");
         },
         [](const RunConfig& c) {
           return std::string(c.model.task == data::Task::binary ? "binary" : "multilabel");
         }},
        int_field("train.batch_size", &RunConfig::train, &T::batch_size),
        real_field("train.learning_rate", &RunConfig::train, &T::learning_rate),
        real_field("train.beta1", &RunConfig::train, &T::beta1),
        real_field("train.beta2", &RunConfig::train, &T::beta2),
        real_field("train.epsilon", &RunConfig::train, &T::epsilon),
        real_field("train.warmup_fraction", &RunConfig::train, &T::warmup_fraction),
        real_field("train.grad_clip_norm", &RunConfig::train, &T::grad_clip_norm),
        int_field("train.patience", &RunConfig::train, &T::patience),
        int_field("train.max_epochs", &RunConfig::train, &T::max_epochs),
        bool_field("train.early_stopping", &RunConfig::train, &T::early_stopping),
        u64_field("train.seed", &RunConfig::train, &T::seed),

        string_field("ablation.cells", &RunConfig::ablation, &AblationConfig::cells),
        string_field("ablation.seeds", &RunConfig::ablation, &AblationConfig::seeds),
        {"output_dir", "string", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
         [](const RunConfig& c) { return c.output_dir; }},
    };
    return f;
  }();
  return all;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

void RunConfig::resolve() {
  model.grid_size = data.grid_size;
  model.window_hours = data.window_hours;
  model.note_dim = data.note_dim;
  data.synthetic.window_hours = data.window_hours;
  data.synthetic.note_dim = data.note_dim;
  if (data.path.empty()) {
    const bool multilabel = data.synthetic.label_rule == data::LabelRule::motif_subset_multilabel;
    if (multilabel != (model.task == data::Task::multilabel))
      throw ConfigError("train.task does not match data.synthetic.label_rule");
    data.synthetic.validate();
  }
  const double ratio_sum = data.split.train + data.split.validation + data.split.test;
  if (data.split.train <= 0.0 || data.split.validation <= 0.0 || data.split.test <= 0.0 ||
      std::abs(ratio_sum - 1.0) > 1e-9)
    throw ConfigError("data.split ratios must be positive and sum to 1");
  model.validate();
  train.validate();
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("malformed section header", line_no);
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    const std::string value = unquote(trim(line.substr(eq + 1)));
    const auto& all = fields();
    auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return f.key == key; });
    if (it == all.end()) throw ConfigError("unknown key '" + key + "' (line " + std::to_string(line_no) + ")");
    it->set(config, value);
  }
  config.resolve();
  return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

std::string render_config(const RunConfig& config) {
  std::ostringstream os;
  for (const auto& f : fields()) {
    std::string v = f.get(config);
    if (f.type == "string") v = "\"" + v + "\"";
    os << f.key << " = " << v << '\n';
  }
  return os.str();
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : render_config(config)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

}  // namespace ctpd
