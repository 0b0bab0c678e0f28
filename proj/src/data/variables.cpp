#include "ctpd/data.hpp"
#include "ctpd/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace ctpd::data {

namespace {

VariableSpec continuous(std::string name, std::string unit) {
  return VariableSpec{std::move(name), VariableKind::continuous, {}, std::move(unit)};
}

VariableSpec categorical(std::string name, std::vector<std::string> levels) {
  return VariableSpec{std::move(name), VariableKind::categorical, std::move(levels), ""};
}

}  // namespace

std::vector<VariableSpec> default_clinical_variables() {
  std::vector<std::string> gcs_total;
  for (int v = 3; v <= 15; ++v) gcs_total.push_back(std::to_string(v));
  return {
      categorical("capillary_refill_rate", {"normal", "delayed"}),
      continuous("diastolic_blood_pressure", "mmHg"),
      continuous("fraction_inspired_oxygen", "fraction"),
      categorical("gcs_eye_opening", {"none", "to_pain", "to_speech", "spontaneously"}),
      categorical("gcs_motor_response", {"no_response", "extension", "abnormal_flexion",
                                         "flex_withdraws", "localizes_pain", "obeys_commands"}),
      categorical("gcs_total", gcs_total),
      categorical("gcs_verbal_response", {"no_response", "incomprehensible_sounds",
                                          "inappropriate_words", "confused", "oriented"}),
      continuous("glucose", "mg/dL"),
      continuous("heart_rate", "bpm"),
      continuous("height", "cm"),
      continuous("mean_blood_pressure", "mmHg"),
      continuous("oxygen_saturation", "%"),
      continuous("respiratory_rate", "breaths/min"),
      continuous("systolic_blood_pressure", "mmHg"),
      continuous("temperature", "C"),
      continuous("weight", "kg"),
      continuous("ph", "pH"),
  };
}

void validate_variable_spec(const std::vector<VariableSpec>& specs) {
  if (specs.empty()) throw SchemaError("variable spec is empty");
  std::set<std::string> names;
  for (const auto& v : specs) {
    if (v.name.empty()) throw SchemaError("variable with empty name");
    if (!names.insert(v.name).second) throw SchemaError("duplicate variable: " + v.name);
    if (v.kind == VariableKind::categorical) {
      if (v.levels.empty()) throw SchemaError("categorical variable without levels: " + v.name);
      std::set<std::string> levels(v.levels.begin(), v.levels.end());
      if (levels.size() != v.levels.size())
        throw SchemaError("duplicate levels in variable: " + v.name);
    } else if (!v.levels.empty()) {
      throw SchemaError("continuous variable with levels: " + v.name);
    }
  }
}

std::vector<VariableSpec> load_variable_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open variable spec: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("variable spec: ") + e.what(), 0);
  }
  if (!doc.is_array()) throw SchemaError("variable spec must be a JSON list");
  std::vector<VariableSpec> specs;
  for (const auto& item : doc) {
    if (!item.is_object() || !item.contains("name") || !item.contains("kind"))
      throw SchemaError("variable spec entries need 'name' and 'kind'");
    for (const auto& [key, _] : item.items()) {
      if (key != "name" && key != "kind" && key != "levels" && key != "unit")
        throw SchemaError("unknown key in variable spec: " + key);
    }
    VariableSpec v;
    v.name = item.at("name").get<std::string>();
    const auto kind = item.at("kind").get<std::string>();
    if (kind == "continuous") {
      v.kind = VariableKind::continuous;
    } else if (kind == "categorical") {
      v.kind = VariableKind::categorical;
    } else {
      throw SchemaError("variable " + v.name + ": unknown kind '" + kind + "'");
    }
    if (item.contains("levels")) v.levels = item.at("levels").get<std::vector<std::string>>();
    if (item.contains("unit")) v.unit = item.at("unit").get<std::string>();
    specs.push_back(std::move(v));
  }
  validate_variable_spec(specs);
  return specs;
}

void save_variable_spec(const std::filesystem::path& path, const std::vector<VariableSpec>& specs) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& v : specs) {
    nlohmann::json item{{"name", v.name},
                        {"kind", v.kind == VariableKind::continuous ? "continuous" : "categorical"},
                        {"unit", v.unit}};
    if (v.kind == VariableKind::categorical) item["levels"] = v.levels;
    doc.push_back(std::move(item));
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write variable spec: " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace ctpd::data
