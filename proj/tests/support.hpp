#pragma once

// Shared fixtures for the unit tests.

#include "ctpd/data.hpp"
#include "ctpd/layers.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace ctpd::test {

inline data::AdmissionRecord record(std::string id, std::string subject = "") {
  data::AdmissionRecord r;
  r.id = id;
  r.subject_id = subject.empty() ? "S" + id : std::move(subject);
  r.window_hours = 48.0;
  return r;
}

/// Random normalized record over `specs` with up to `max_obs` observations
/// per variable; some variables stay empty.
inline data::AdmissionRecord random_record(Rng& rng, const std::vector<data::VariableSpec>& specs,
                                           int max_obs, double window = 48.0) {
  data::AdmissionRecord r = record("R");
  r.window_hours = window;
  std::uniform_int_distribution<int> count(0, max_obs);
  std::uniform_real_distribution<double> time(0.0, window);
  std::normal_distribution<double> value(0.0, 1.0);
  for (const auto& s : specs) {
    const int n = count(rng);
    if (n == 0) continue;
    std::vector<double> ts(static_cast<std::size_t>(n));
    for (auto& t : ts) t = std::round(time(rng) * 4.0) / 4.0;  // quarter hours, so ties occur
    std::sort(ts.begin(), ts.end());
    auto& list = r.series[s.name];
    for (double t : ts) list.push_back({t, value(rng)});
  }
  return r;
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("ctpd-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ctpd::test
