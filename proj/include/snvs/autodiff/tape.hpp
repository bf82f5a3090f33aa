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
#include <functional>
#include <initializer_list>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "snvs/autodiff/param_store.hpp"
#include "snvs/autodiff/tensor.hpp"

namespace snvs::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  std::int64_t rows() const { return value().rows(); }
  std::int64_t cols() const { return value().cols(); }
  bool requires_grad() const;
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so parents always precede
/// children and a single reverse sweep visits every node once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a stored tensor; repeated calls with the same name return the same node.
  /// Requires grad only when the tensor is trainable and the tape records gradients.
  Var param(ParamStore& store, std::string_view name);

  /// Appends an op node. `fn` runs during backward only if some parent requires grad.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
  }

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(int id);
  bool has_grad(int id) const { return !nodes_[static_cast<std::size_t>(id)].grad.empty(); }

  /// Propagates d(root)/d(node) to every reachable node. With a store, parameter gradients are
  /// written to it: overwritten (every tensor zeroed first) or added when `accumulate` is set.
  void backward(Var root, ParamStore* store = nullptr, bool accumulate = false);

  /// Folds the taken branch of a non-smooth op (relu sign pattern, clamps, early stops)
  /// into a running fingerprint; two evaluations with equal fingerprints took the same branches.
  void note_branch(std::span<const unsigned char> pattern);
  std::uint64_t branch_signature() const { return branch_hash_; }

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_nodes_;
  bool grad_enabled_ = true;
  std::uint64_t branch_hash_ = 1469598103934665603ULL;
};

}  // namespace snvs::ad
