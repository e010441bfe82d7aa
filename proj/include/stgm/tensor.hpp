// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stgm/error.hpp"

namespace stgm {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Product of every dimension except the last.
  std::size_t rows() const;
  /// Size of the last dimension.
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j, std::size_t k);
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  /// Same data, new shape. Throws DimensionError if sizes differ.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  void fill(double value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double scale);

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
double sum(const Tensor& t);
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
/// max |a - b| / max(|a|, |b|) over entries; entries where both are zero count as 0.
double max_rel_diff(const Tensor& a, const Tensor& b);

void require_shape(const Tensor& t, const Shape& expected, const char* what);

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng);
Tensor normal_tensor(Shape shape, double stddev, Rng& rng);

struct Param {
  Tensor value;
  Tensor grad;
};

/// Named parameters with matching gradient buffers.
class ParamStore {
 public:
  /// Registers a parameter; throws ConfigError on a duplicate identifier.
  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  void remove_prefix(const std::string& prefix);

  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Tensor& grad(const std::string& name) const;
  Tensor& grad(const std::string& name);
  Param& param(const std::string& name);
  const Param& param(const std::string& name) const;

  void zero_grad();
  std::size_t parameter_count() const;
  std::size_t tensor_count() const { return params_.size(); }
  std::vector<std::string> names() const;

  /// Copy of the values with all gradients zeroed.
  ParamStore clone_zeroed() const;
  /// grad += other.grad for every shared identifier (fixed key order).
  void accumulate_grads(const ParamStore& other);
  void scale_grads(double factor);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Param> params_;
};

/// Affine weights: uniform(-s, s), s = 1/sqrt(fan_in).
Tensor init_affine_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);
Tensor init_affine_weight(Shape shape, std::size_t fan_in, Rng& rng);

// Checkpoint container: magic, format-version byte, metadata text, then
// (name, shape, raw little-endian float64) records.
inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'G', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void store_params(Checkpoint& ckpt, const ParamStore& params, const std::string& prefix = "");
/// Loads every parameter of `params` from records named prefix+name; shapes must match.
void restore_params(const Checkpoint& ckpt, ParamStore& params, const std::string& prefix = "");

}  // namespace stgm
