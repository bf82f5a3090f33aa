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

#include "snvs/autodiff/tape.hpp"

#include <string>

namespace snvs::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  nodes_.push_back({std::move(value), {}, {}, false, nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(ParamStore& store, std::string_view name) {
  std::string key(name);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return {this, it->second};
  Parameter& p = store.at(name);
  nodes_.push_back({p.value, {}, {}, grad_enabled_ && p.trainable, &p});
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_.emplace(std::move(key), id);
  return {this, id};
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (const Var& p : parents) {
      if (p.tape() != this) throw Error("tape: operand belongs to a different tape");
      needs = needs || requires_grad(p.id());
    }
  }
  nodes_.push_back({std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, needs, nullptr});
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Tensor& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty() && n.value.size() > 0) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root, ParamStore* store, bool accumulate) {
  if (root.tape() != this) throw Error("tape: root belongs to a different tape");
  if (value(root.id()).size() != 1)
    throw ShapeError("backward: root must be scalar, got " + value(root.id()).shape_string());
  if (store && !accumulate) store->zero_grad();
  for (auto& n : nodes_) n.grad = Tensor();
  grad(root.id())[0] = 1.0;
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
  if (!store) return;
  for (auto& n : nodes_) {
    if (!n.param || !n.requires_grad || n.grad.empty()) continue;
    auto& dst = n.param->grad.values();
    const auto& src = n.grad.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

void Tape::note_branch(std::span<const unsigned char> pattern) {
  std::uint64_t h = branch_hash_;
  for (unsigned char b : pattern) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  h ^= pattern.size();
  h *= 1099511628211ULL;
  branch_hash_ = h;
}

}  // namespace snvs::ad
