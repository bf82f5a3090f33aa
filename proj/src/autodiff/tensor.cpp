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

#include "snvs/autodiff/tensor.hpp"

#include <cmath>

namespace snvs::ad {

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor transpose_blocks(const Tensor& t, std::int64_t blocks) {
  if (blocks <= 0 || t.rows() % blocks != 0) throw ShapeError("transpose_blocks: rows not divisible by block count");
  const std::int64_t r = t.rows() / blocks;
  const std::int64_t c = t.cols();
  Tensor out(blocks * c, r);
  for (std::int64_t b = 0; b < blocks; ++b)
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) out(b * c + j, i) = t(b * r + i, j);
  return out;
}

}  // namespace snvs::ad
