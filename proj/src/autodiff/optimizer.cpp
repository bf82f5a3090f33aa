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

#include "snvs/autodiff/optimizer.hpp"

#include <cmath>

namespace snvs::ad {

void adam_step(ParamStore& store, const AdamConfig& config) {
  for (const auto& [name, p] : store.entries())
    if (p.trainable && !p.grad.all_finite()) throw Error("adam_step: non-finite gradient in tensor '" + name + "'");

  const std::int64_t step = ++store.optimizer_step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (auto& [_, p] : store.entries()) {
    if (!p.trainable) continue;
    auto& w = p.value.values();
    const auto& g = p.grad.values();
    auto& m = p.first_moment.values();
    auto& v = p.second_moment.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

}  // namespace snvs::ad
