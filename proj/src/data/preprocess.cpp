#include "ctpd/data.hpp"
#include "ctpd/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace ctpd::data {

namespace {

ContinuousStats pooled_stats(const std::vector<double>& xs, const std::string& name) {
  if (xs.empty()) {
    spdlog::warn("variable '{}' has no training observations; using mean 0, std 1", name);
    return {};
  }
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  double sd = std::sqrt(var);
  if (!(sd > 0.0)) {
    spdlog::warn("variable '{}' is constant on training data; using std 1", name);
    sd = 1.0;
  }
  return {mean, sd};
}

}  // namespace

NormStats compute_norm_stats(const std::vector<AdmissionRecord>& train,
                             const std::vector<VariableSpec>& specs) {
  if (train.empty()) throw ValidationError("cannot compute normalization stats on an empty split");
  NormStats stats;
  for (const auto& spec : specs) {
    if (spec.kind == VariableKind::continuous) {
      std::vector<double> xs;
      for (const auto& r : train) {
        auto it = r.series.find(spec.name);
        if (it == r.series.end()) continue;
        for (const auto& o : it->second) {
          const auto* v = std::get_if<double>(&o.value);
          if (v == nullptr)
            throw ValidationError("admission '" + r.id + "': text value for continuous '" +
                                  spec.name + "'");
          xs.push_back(*v);
        }
      }
      stats.continuous[spec.name] = pooled_stats(xs, spec.name);
    } else {
      CategoricalCodes cat;
      for (std::size_t i = 0; i < spec.levels.size(); ++i)
        cat.codes[spec.levels[i]] = static_cast<int>(i);
      std::vector<double> codes;
      for (const auto& r : train) {
        auto it = r.series.find(spec.name);
        if (it == r.series.end()) continue;
        for (const auto& o : it->second) {
          const auto* label = std::get_if<std::string>(&o.value);
          if (label == nullptr)
            throw ValidationError("admission '" + r.id + "': expected a level of '" + spec.name +
                                  "'");
          auto c = cat.codes.find(*label);
          if (c == cat.codes.end())
            throw ValidationError("admission '" + r.id + "': unknown level '" + *label +
                                  "' for '" + spec.name + "'");
          codes.push_back(static_cast<double>(c->second));
        }
      }
      cat.code_stats = pooled_stats(codes, spec.name);
      stats.categorical[spec.name] = std::move(cat);
    }
  }
  return stats;
}

AdmissionRecord normalize(const AdmissionRecord& record, const NormStats& stats) {
  AdmissionRecord out = record;
  for (auto& [name, obs] : out.series) {
    if (auto c = stats.continuous.find(name); c != stats.continuous.end()) {
      for (auto& o : obs) {
        const auto* v = std::get_if<double>(&o.value);
        if (v == nullptr)
          throw ValidationError("admission '" + record.id + "': text value for continuous '" +
                                name + "'");
        o.value = (*v - c->second.mean) / c->second.stddev;
      }
    } else if (auto k = stats.categorical.find(name); k != stats.categorical.end()) {
      const auto& cat = k->second;
      for (auto& o : obs) {
        const auto* label = std::get_if<std::string>(&o.value);
        if (label == nullptr)
          throw ValidationError("admission '" + record.id + "': expected a level of '" + name +
                                "'");
        auto code = cat.codes.find(*label);
        if (code == cat.codes.end())
          throw ValidationError("admission '" + record.id + "': unknown level '" + *label +
                                "' for '" + name + "'");
        o.value = (static_cast<double>(code->second) - cat.code_stats.mean) / cat.code_stats.stddev;
      }
    } else {
      throw SchemaError("admission '" + record.id + "': no normalization stats for '" + name + "'");
    }
  }
  return out;
}

DatasetSplits split_by_subject(const std::vector<AdmissionRecord>& records,
                               const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.validation + ratios.test;
  if (std::abs(sum - 1.0) > 1e-9 || ratios.train < 0 || ratios.validation < 0 || ratios.test < 0)
    throw ConfigError("split ratios must be non-negative and sum to 1");
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.subject_id);
  if (unique.size() < 3) throw ValidationError("splitting needs at least 3 subjects");
  std::vector<std::string> subjects(unique.begin(), unique.end());
  Rng rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  const auto n = static_cast<double>(subjects.size());
  // tolerance keeps exact ratios like 300/2900 from flooring one short
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.validation + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
  std::map<std::string, int> which;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    int s = 0;
    if (i < n_val) {
      s = 1;
    } else if (i < n_val + n_test) {
      s = 2;
    }
    which[subjects[i]] = s;
  }
  DatasetSplits out;
  for (const auto& r : records) {
    switch (which[r.subject_id]) {
      case 0: out.train.push_back(r); break;
      case 1: out.validation.push_back(r); break;
      default: out.test.push_back(r); break;
    }
  }
  return out;
}

}  // namespace ctpd::data
