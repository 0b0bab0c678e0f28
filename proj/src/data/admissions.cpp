#include "ctpd/data.hpp"
#include "ctpd/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ctpd::data {

using nlohmann::json;

Matrix LabelSet::as_row() const {
  if (task == Task::binary) return Matrix::Constant(1, 1, static_cast<double>(binary_label));
  Matrix row(1, static_cast<Eigen::Index>(multilabel.size()));
  for (std::size_t i = 0; i < multilabel.size(); ++i)
    row(0, static_cast<Eigen::Index>(i)) = static_cast<double>(multilabel[i]);
  return row;
}

std::size_t AdmissionRecord::observation_count() const {
  std::size_t n = 0;
  for (const auto& [_, obs] : series) n += obs.size();
  return n;
}

namespace {

const VariableSpec* find_spec(const std::vector<VariableSpec>& specs, const std::string& name) {
  for (const auto& s : specs)
    if (s.name == name) return &s;
  return nullptr;
}

}  // namespace

void validate_record(const AdmissionRecord& r, const std::vector<VariableSpec>& specs) {
  const std::string who = "admission '" + r.id + "'";
  if (r.id.empty()) throw ValidationError("admission with empty id");
  if (!(r.window_hours > 0.0) || !std::isfinite(r.window_hours))
    throw ValidationError(who + ": window_hours must be positive");
  for (const auto& [name, obs] : r.series) {
    const auto* spec = find_spec(specs, name);
    if (spec == nullptr) throw SchemaError(who + ": unknown variable '" + name + "'");
    double prev = -std::numeric_limits<double>::infinity();
    for (const auto& o : obs) {
      if (!std::isfinite(o.time) || o.time < 0.0 || o.time > r.window_hours) {
        std::ostringstream msg;
        msg << who << ": observation of '" << name << "' at t=" << o.time
            << " outside window [0, " << r.window_hours << "]";
        throw ValidationError(msg.str());
      }
      if (o.time < prev) throw ValidationError(who + ": times of '" + name + "' are not sorted");
      prev = o.time;
      if (const auto* label = std::get_if<std::string>(&o.value)) {
        if (spec->kind != VariableKind::categorical)
          throw SchemaError(who + ": continuous variable '" + name + "' has a text value");
        if (std::find(spec->levels.begin(), spec->levels.end(), *label) == spec->levels.end())
          throw ValidationError(who + ": unknown level '" + *label + "' for '" + name + "'");
      } else if (!std::isfinite(std::get<double>(o.value))) {
        throw ValidationError(who + ": non-finite value for '" + name + "'");
      }
    }
  }
  for (const auto& n : r.notes) {
    if (!std::isfinite(n.time) || n.time < 0.0 || n.time > r.window_hours) {
      std::ostringstream msg;
      msg << who << ": note at t=" << n.time << " outside window [0, " << r.window_hours << "]";
      throw ValidationError(msg.str());
    }
  }
  const auto& l = r.labels;
  if (l.task == Task::binary) {
    if (l.binary_label != 0 && l.binary_label != 1)
      throw ValidationError(who + ": binary label must be 0 or 1");
  } else {
    if (l.multilabel.size() != static_cast<std::size_t>(kPhenotypeCount))
      throw ValidationError(who + ": phenotype labels must have 25 entries");
    for (int v : l.multilabel)
      if (v != 0 && v != 1) throw ValidationError(who + ": phenotype labels must be 0 or 1");
  }
}

AdmissionRecord parse_admission(const std::string& line, const std::vector<VariableSpec>& specs,
                                std::size_t line_number) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), line_number);
  }
  AdmissionRecord r;
  try {
    if (!doc.is_object()) throw ParseError("record must be a JSON object", line_number);
    r.id = doc.at("id").get<std::string>();
    r.subject_id = doc.at("subject_id").get<std::string>();
    r.window_hours = doc.at("window_hours").get<double>();
    for (const auto& [name, pairs] : doc.at("series").items()) {
      const auto* spec = find_spec(specs, name);
      if (spec == nullptr)
        throw SchemaError("line " + std::to_string(line_number) + ": admission '" + r.id +
                          "': unknown variable '" + name + "'");
      std::vector<Observation> obs;
      for (const auto& p : pairs) {
        if (!p.is_array() || p.size() != 2)
          throw ParseError("series entries must be [time, value] pairs", line_number);
        Observation o;
        o.time = p[0].get<double>();
        if (p[1].is_string()) {
          o.value = p[1].get<std::string>();
        } else if (spec->kind == VariableKind::categorical && p[1].is_number_integer()) {
          o.value = std::to_string(p[1].get<long long>());
        } else {
          o.value = p[1].get<double>();
        }
        obs.push_back(std::move(o));
      }
      std::stable_sort(obs.begin(), obs.end(),
                       [](const Observation& a, const Observation& b) { return a.time < b.time; });
      r.series.emplace(name, std::move(obs));
    }
    if (doc.contains("notes")) {
      for (const auto& n : doc.at("notes")) {
        NoteEvent note;
        note.time = n.at("t").get<double>();
        if (n.contains("text") && !n.at("text").is_null()) note.text = n.at("text").get<std::string>();
        if (n.contains("embedding") && !n.at("embedding").is_null())
          note.embedding = n.at("embedding").get<std::vector<double>>();
        r.notes.push_back(std::move(note));
      }
      std::stable_sort(r.notes.begin(), r.notes.end(),
                       [](const NoteEvent& a, const NoteEvent& b) { return a.time < b.time; });
    }
    const auto& labels = doc.at("labels");
    if (labels.contains("mortality")) {
      r.labels.task = Task::binary;
      r.labels.binary_label = labels.at("mortality").get<int>();
    } else if (labels.contains("phenotypes")) {
      r.labels.task = Task::multilabel;
      r.labels.multilabel = labels.at("phenotypes").get<std::vector<int>>();
    } else {
      throw ParseError("labels need 'mortality' or 'phenotypes'", line_number);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what(), line_number);
  }
  try {
    validate_record(r, specs);
  } catch (const ValidationError& e) {
    throw ValidationError("line " + std::to_string(line_number) + ": " + e.what());
  }
  return r;
}

std::string serialize_admission(const AdmissionRecord& r) {
  json series = json::object();
  for (const auto& [name, obs] : r.series) {
    json pairs = json::array();
    for (const auto& o : obs) {
      if (const auto* label = std::get_if<std::string>(&o.value)) {
        pairs.push_back(json::array({o.time, *label}));
      } else {
        pairs.push_back(json::array({o.time, std::get<double>(o.value)}));
      }
    }
    series[name] = std::move(pairs);
  }
  json notes = json::array();
  for (const auto& n : r.notes) {
    json item{{"t", n.time}};
    if (n.text) item["text"] = *n.text;
    if (n.embedding) item["embedding"] = *n.embedding;
    notes.push_back(std::move(item));
  }
  json labels = r.labels.task == Task::binary ? json{{"mortality", r.labels.binary_label}}
                                              : json{{"phenotypes", r.labels.multilabel}};
  json doc{{"id", r.id},         {"subject_id", r.subject_id}, {"window_hours", r.window_hours},
           {"series", series},   {"notes", notes},             {"labels", labels}};
  return doc.dump();
}

std::vector<AdmissionRecord> load_admissions(const std::filesystem::path& path,
                                             const std::vector<VariableSpec>& specs) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open admissions file: " + path.string());
  std::vector<AdmissionRecord> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto r = parse_admission(line, specs, number);
    if (!ids.insert(r.id).second)
      throw ValidationError("line " + std::to_string(number) + ": duplicate admission id '" +
                            r.id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

void save_admissions(const std::filesystem::path& path, const std::vector<AdmissionRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write admissions file: " + path.string());
  for (const auto& r : records) out << serialize_admission(r) << '\n';
}

}  // namespace ctpd::data
