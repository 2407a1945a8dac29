/* Copyright 2026 The MDPR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mdpr/error.hpp"

namespace mdpr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Dense row-major array of doubles. Rank is small (scalars are stored as
// shape {1}); the class carries no broadcasting or views beyond row slices.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
    check_extents();
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_volume(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  const double& operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const double& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Number of elements under one index of the leading axis.
  std::size_t row_stride() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }

  std::span<double> row(std::size_t i) {
    const std::size_t n = row_stride();
    return std::span<double>(data_).subspan(i * n, n);
  }
  std::span<const double> row(std::size_t i) const {
    const std::size_t n = row_stride();
    return std::span<const double>(data_).subspan(i * n, n);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (std::size_t e : shape_)
      if (e == 0) throw ShapeError("tensor extents must be positive: " + shape_string(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

// Small dense vector helpers used throughout. All take spans so rows of a
// Tensor and std::vector<double> mix freely.

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline std::vector<double> normalized(std::span<const double> a) {
  const double n = norm(a);
  std::vector<double> out(a.begin(), a.end());
  if (n > 0.0)
    for (double& v : out) v /= n;
  return out;
}

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// out = x * W + b, with W stored rows=in, cols=out.
inline void affine(std::span<const double> x, const Tensor& weight,
                   std::span<const double> bias, std::span<double> out) {
  const std::size_t in = weight.extent(0), cols = weight.extent(1);
  for (std::size_t j = 0; j < cols; ++j) out[j] = bias[j];
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* w = weight.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += xi * w[j];
  }
}

// Backward of affine(): accumulates dW += x^T dy, db += dy and, when dx is
// non-empty, dx += dy W^T.
inline void affine_backward(std::span<const double> x, const Tensor& weight,
                            std::span<const double> dy, Tensor& d_weight,
                            std::span<double> d_bias, std::span<double> dx) {
  const std::size_t in = weight.extent(0), cols = weight.extent(1);
  for (std::size_t j = 0; j < cols; ++j) d_bias[j] += dy[j];
  for (std::size_t i = 0; i < in; ++i) {
    double* dw = d_weight.data() + i * cols;
    const double* w = weight.data() + i * cols;
    const double xi = x[i];
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      dw[j] += xi * dy[j];
      acc += w[j] * dy[j];
    }
    if (!dx.empty()) dx[i] += acc;
  }
}

}  // namespace mdpr
