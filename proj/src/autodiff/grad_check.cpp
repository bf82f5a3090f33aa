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

#include "snvs/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace snvs::ad {

namespace {

struct Eval {
  double value;
  std::uint64_t signature;
};

Eval evaluate(const LossFn& f) {
  Tape tape(false);
  const Var root = f(tape);
  const double v = root.value().item();
  if (!std::isfinite(v)) throw Error("grad_check: loss is not finite");
  return {v, tape.branch_signature()};
}

}  // namespace

GradCheckResult grad_check(ParamStore& store, const LossFn& f, const GradCheckOptions& options) {
  SNVS_REQUIRE(options.h > 0.0, "grad_check: step must be positive");
  std::uint64_t base_signature = 0;
  {
    Tape tape(true);
    const Var root = f(tape);
    if (!std::isfinite(root.value().item())) throw Error("grad_check: loss is not finite");
    tape.backward(root, &store);
    base_signature = tape.branch_signature();
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (auto& [name, p] : store.entries()) {
    if (!p.trainable || !name.starts_with(options.prefix)) continue;
    const std::int64_t n = p.value.size();
    std::vector<std::int64_t> picks(static_cast<std::size_t>(n));
    std::iota(picks.begin(), picks.end(), 0);
    if (n > options.samples_per_tensor) {
      std::shuffle(picks.begin(), picks.end(), rng);
      picks.resize(static_cast<std::size_t>(options.samples_per_tensor));
    }
    const Tensor analytic = p.grad;
    for (std::int64_t idx : picks) {
      const double saved = p.value[idx];
      p.value[idx] = saved + options.h;
      const Eval plus = evaluate(f);
      p.value[idx] = saved - options.h;
      const Eval minus = evaluate(f);
      p.value[idx] = saved;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.h);
      const double a = analytic[idx];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_tensor = name;
        result.worst_index = idx;
      }
    }
  }
  return result;
}

}  // namespace snvs::ad
