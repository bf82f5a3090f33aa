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
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "snvs/autodiff/tensor.hpp"

namespace snvs::ad {

struct Parameter {
  std::vector<std::int64_t> shape;
  Tensor value;  // viewed as prod(shape[:-1]) x shape.back()
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
  bool trainable = true;
};

/// Named trainable tensors plus optimizer state. Iteration order is by name.
class ParamStore {
 public:
  /// Registers a tensor; throws on a duplicate name or a value/shape mismatch.
  Parameter& add(const std::string& name, std::vector<std::int64_t> shape, std::vector<double> values);
  /// Registers a tensor with uniform(+-sqrt(6/(fan_in+fan_out))) weights.
  Parameter& add_glorot(const std::string& name, std::vector<std::int64_t> shape, std::int64_t fan_in,
                        std::int64_t fan_out, std::mt19937_64& rng);
  Parameter& add_zeros(const std::string& name, std::vector<std::int64_t> shape);

  bool contains(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;

  std::map<std::string, Parameter, std::less<>>& entries() { return params_; }
  const std::map<std::string, Parameter, std::less<>>& entries() const { return params_; }

  void zero_grad();
  /// Sets the trainable flag on every tensor whose name starts with `prefix`; returns how many matched.
  int set_trainable(std::string_view prefix, bool trainable);
  void set_all_trainable(bool trainable);

  /// Copies values of every tensor present in both stores (shapes must match).
  void load_values_from(const ParamStore& other, std::string_view prefix = "");

  /// Bitwise equality of values for tensors whose name starts with `prefix`.
  bool values_equal(const ParamStore& other, std::string_view prefix = "") const;

  std::int64_t optimizer_step = 0;

 private:
  std::map<std::string, Parameter, std::less<>> params_;
};

std::int64_t shape_rows(const std::vector<std::int64_t>& shape);
std::int64_t shape_cols(const std::vector<std::int64_t>& shape);

}  // namespace snvs::ad
