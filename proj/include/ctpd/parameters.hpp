#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ctpd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

/// Handle to a parameter inside a ParameterStore.
struct ParamId {
  std::uint32_t index = 0;
  friend bool operator==(ParamId, ParamId) = default;
};

/// Named, ordered collection of trainable matrices. Insertion order is the
/// canonical order used for gradients, optimizer state and checkpoints.
class ParameterStore {
 public:
  ParamId add(std::string name, Matrix init);

  const Matrix& value(ParamId id) const { return values_[id.index]; }
  Matrix& value(ParamId id) { return values_[id.index]; }
  const std::string& name(ParamId id) const { return names_[id.index]; }

  std::size_t size() const { return values_.size(); }
  std::size_t total_elements() const;
  std::optional<ParamId> find(const std::string& name) const;
  /// All parameters whose name starts with `prefix`, in store order.
  std::vector<ParamId> with_prefix(std::string_view prefix) const;
  std::vector<ParamId> all() const;

  bool same_layout(const ParameterStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, std::uint32_t, std::less<>> index_;
};

/// Gradient buffer aligned with a ParameterStore.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterStore& store);

  Matrix& operator[](ParamId id) { return grads_[id.index]; }
  const Matrix& operator[](ParamId id) const { return grads_[id.index]; }
  std::size_t size() const { return grads_.size(); }

  void set_zero();
  void add(const Gradients& other);
  void scale(double factor);
  double global_norm() const;
  bool all_finite() const;

 private:
  std::vector<Matrix> grads_;
};

namespace init {

/// Glorot-uniform weights for an `in x out` projection.
Matrix xavier(Eigen::Index in, Eigen::Index out, Rng& rng);
Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Matrix uniform(Eigen::Index rows, Eigen::Index cols, double lo, double hi, Rng& rng);

}  // namespace init

}  // namespace ctpd
