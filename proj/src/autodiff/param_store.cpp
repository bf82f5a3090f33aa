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

#include "snvs/autodiff/param_store.hpp"

#include <cmath>
#include <cstring>

namespace snvs::ad {

std::int64_t shape_cols(const std::vector<std::int64_t>& shape) { return shape.empty() ? 1 : shape.back(); }

std::int64_t shape_rows(const std::vector<std::int64_t>& shape) {
  std::int64_t r = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return r;
}

Parameter& ParamStore::add(const std::string& name, std::vector<std::int64_t> shape, std::vector<double> values) {
  if (params_.contains(name)) throw Error("param store: duplicate tensor name '" + name + "'");
  for (auto d : shape) SNVS_REQUIRE(d >= 0, "param store: negative dimension for '" + name + "'");
  const std::int64_t rows = shape_rows(shape);
  const std::int64_t cols = shape_cols(shape);
  Parameter p;
  p.value = Tensor(rows, cols, std::move(values));
  p.grad = Tensor(rows, cols);
  p.first_moment = Tensor(rows, cols);
  p.second_moment = Tensor(rows, cols);
  p.shape = std::move(shape);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::add_glorot(const std::string& name, std::vector<std::int64_t> shape, std::int64_t fan_in,
                                  std::int64_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(static_cast<std::size_t>(shape_rows(shape) * shape_cols(shape)));
  for (auto& x : v) x = dist(rng);
  return add(name, std::move(shape), std::move(v));
}

Parameter& ParamStore::add_zeros(const std::string& name, std::vector<std::int64_t> shape) {
  std::vector<double> v(static_cast<std::size_t>(shape_rows(shape) * shape_cols(shape)), 0.0);
  return add(name, std::move(shape), std::move(v));
}

bool ParamStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

Parameter& ParamStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("param store: no tensor named '" + std::string(name) + "'");
  return it->second;
}

const Parameter& ParamStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("param store: no tensor named '" + std::string(name) + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

int ParamStore::set_trainable(std::string_view prefix, bool trainable) {
  int n = 0;
  for (auto& [name, p] : params_) {
    if (name.starts_with(prefix)) {
      p.trainable = trainable;
      ++n;
    }
  }
  return n;
}

void ParamStore::set_all_trainable(bool trainable) {
  for (auto& [_, p] : params_) p.trainable = trainable;
}

void ParamStore::load_values_from(const ParamStore& other, std::string_view prefix) {
  for (auto& [name, p] : params_) {
    if (!name.starts_with(prefix)) continue;
    auto it = other.params_.find(name);
    if (it == other.params_.end()) continue;
    if (it->second.shape != p.shape) throw ShapeError("param store: shape mismatch loading '" + name + "'");
    p.value = it->second.value;
  }
}

bool ParamStore::values_equal(const ParamStore& other, std::string_view prefix) const {
  for (const auto& [name, p] : params_) {
    if (!name.starts_with(prefix)) continue;
    auto it = other.params_.find(name);
    if (it == other.params_.end() || it->second.shape != p.shape) return false;
    const auto& a = p.value.values();
    const auto& b = it->second.value.values();
    if (a.size() != b.size() || (!a.empty() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0))
      return false;
  }
  return true;
}

}  // namespace snvs::ad
