// Copyright 2026 The snvs Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "snvs/error.hpp"

namespace snvs::ad {

/// Dense row-major matrix of doubles. Every value flowing through the tape is one of these;
/// vectors are 1 x n or n x 1 and scalars are 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::int64_t rows, std::int64_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows * cols), fill) {
    SNVS_REQUIRE(rows >= 0 && cols >= 0, "tensor: negative dimension");
  }
  Tensor(std::int64_t rows, std::int64_t cols, std::vector<double> values) : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (static_cast<std::int64_t>(data_.size()) != rows * cols) throw ShapeError("tensor: value count does not match shape");
  }
  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t size() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  double operator()(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::span<double> row(std::int64_t r) { return {data_.data() + r * cols_, static_cast<std::size_t>(cols_)}; }
  std::span<const double> row(std::int64_t r) const {
    return {data_.data() + r * cols_, static_cast<std::size_t>(cols_)};
  }

  double item() const {
    if (size() != 1) throw ShapeError("tensor: item() on non-scalar " + shape_string());
    return data_[0];
  }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;
  std::string shape_string() const { return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")"; }

  bool operator==(const Tensor&) const = default;

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<double> data_;
};

/// Row-major transpose of each (rows x cols) block of a stacked (blocks * rows) x cols tensor.
Tensor transpose_blocks(const Tensor& t, std::int64_t blocks);

}  // namespace snvs::ad
