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
#include <string>

#include "snvs/autodiff/tape.hpp"

namespace snvs::ad {

struct GradCheckOptions {
  double h = 1e-3;
  /// Entries sampled per trainable tensor (all entries when the tensor is smaller).
  int samples_per_tensor = 6;
  std::uint64_t seed = 0;
  /// Only tensors whose name starts with this prefix are checked.
  std::string prefix;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  /// Samples whose +-h evaluations took a different branch of a non-smooth op than the base point.
  int skipped = 0;
  std::string worst_tensor;
  std::int64_t worst_index = -1;
};

/// Builds the scalar loss on the given tape from parameters of the store.
using LossFn = std::function<Var(Tape&)>;

/// Central-difference check of reverse-mode gradients:
///   max |analytic - (f(x+h) - f(x-h)) / 2h| / max(1e-8, |analytic| + |numeric|)
/// over sampled entries of every trainable tensor. Throws if f is non-finite.
GradCheckResult grad_check(ParamStore& store, const LossFn& f, const GradCheckOptions& options = {});

}  // namespace snvs::ad
