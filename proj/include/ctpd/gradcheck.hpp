#pragma once

// Central finite-difference checks of the analytic gradients, per component
// and for the full model.

#include "ctpd/parameters.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ctpd::gradcheck {

struct Coordinate {
  std::string param;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct Report {
  std::string component;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::vector<Coordinate> worst;  // largest errors first
  double seconds = 0.0;
};

struct Options {
  double step = 1e-5;
  std::size_t min_coordinates = 200;
  std::size_t keep_worst = 5;
  double failure_threshold = 1e-3;  // coordinates above this are always listed
  // Denominator floor relative to |f|: central differences carry round-off of
  // about 1e-16 |f| / step, so gradients far below |f| are noise-dominated.
  double value_floor = 1e-6;
};

/// |a - n| / max(floor, |a| + |n|)
double relative_error(double analytic, double numeric, double floor = 1e-8);

/// Checks d value / d store against `analytic` on every coordinate, or on a
/// random subsample of at least `min_coordinates` when there are more.
Report check(const std::string& component, ParameterStore& store,
             const std::function<double(const ParameterStore&)>& value,
             const std::function<Gradients(const ParameterStore&)>& analytic, std::uint64_t seed,
             const Options& options = {});

std::vector<std::string> components();
/// Builds a small randomized instance of `component` and checks it.
Report check_component(const std::string& component, std::uint64_t seed, const Options& options = {});

}  // namespace ctpd::gradcheck
