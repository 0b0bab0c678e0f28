#include "ctpd/parameters.hpp"

#include "ctpd/error.hpp"

#include <cmath>

namespace ctpd {

ParamId ParameterStore::add(std::string name, Matrix init) {
  if (index_.contains(name)) throw Error("duplicate parameter name: " + name);
  const auto idx = static_cast<std::uint32_t>(values_.size());
  index_.emplace(name, idx);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return ParamId{idx};
}

std::size_t ParameterStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return ParamId{it->second};
}

std::vector<ParamId> ParameterStore::with_prefix(std::string_view prefix) const {
  std::vector<ParamId> out;
  for (std::uint32_t i = 0; i < names_.size(); ++i) {
    if (std::string_view(names_[i]).starts_with(prefix)) out.push_back(ParamId{i});
  }
  return out;
}

std::vector<ParamId> ParameterStore::all() const {
  std::vector<ParamId> out(values_.size());
  for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = ParamId{i};
  return out;
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != other.values_[i].rows() ||
        values_[i].cols() != other.values_[i].cols()) {
      return false;
    }
  }
  return true;
}

Gradients::Gradients(const ParameterStore& store) {
  grads_.reserve(store.size());
  for (auto id : store.all()) {
    const auto& v = store.value(id);
    grads_.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
}

void Gradients::set_zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) g *= factor;
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) sq += g.squaredNorm();
  return std::sqrt(sq);
}

bool Gradients::all_finite() const {
  for (const auto& g : grads_) {
    if (!g.allFinite()) return false;
  }
  return true;
}

namespace init {

Matrix xavier(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  return uniform(in, out, -a, a, rng);
}

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace init

}  // namespace ctpd
