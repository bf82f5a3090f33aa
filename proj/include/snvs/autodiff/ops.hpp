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
#include <memory>
#include <span>
#include <vector>

#include "snvs/autodiff/tape.hpp"

// Differentiable primitives. Every op records a node with an exact backward rule and throws
// ShapeError naming both operand shapes when they do not conform.

namespace snvs::ad {

/// Row index table shared between forward and backward of gather-style ops:
/// `taps` entries per output row, -1 for a missing source.
struct IndexTable {
  std::int64_t rows = 0;
  int taps = 1;
  std::vector<std::int32_t> index;
};
using IndexTablePtr = std::shared_ptr<const IndexTable>;

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// a (n x c) + bias (1 x c) broadcast over rows.
Var add_row(Var a, Var bias);
/// a (n x c) * column (n x 1) broadcast over columns.
Var mul_col(Var a, Var column);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::int64_t begin, std::int64_t end);
Var concat_rows(std::span<const Var> parts);

/// out[r] = a[index[r]] (zero row for index -1).
Var gather_rows(Var a, std::shared_ptr<const std::vector<std::int32_t>> index);
/// out (rows x c) with out[index[r]] += a[r]; index -1 dropped.
Var scatter_add_rows(Var a, std::shared_ptr<const std::vector<std::int32_t>> index, std::int64_t rows);
/// out[r] = sum_k weights[r, k] * a[table[r, k]] with constant weights (rows x taps).
Var weighted_gather(Var a, IndexTablePtr table, std::shared_ptr<const std::vector<double>> weights);

/// out[r] = bias + sum_k a[table[r, k]] * W_k with W stacked as (taps * cin) x cout.
/// `bias` may be an invalid Var for no bias.
Var gather_conv(Var a, Var weight, Var bias, IndexTablePtr table);

Var relu(Var a);
Var leaky_relu(Var a, double slope = 0.2);
Var sigmoid(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var abs(Var a);
Var clamp(Var a, double lo, double hi);

Var sum(Var a);
Var mean(Var a);
/// Column vector of per-row sums.
Var row_sum(Var a);

/// Value copied without gradient flow.
Var detach(Var a);

/// Convenience for building tensors with a known shape.
Tensor from_values(std::int64_t rows, std::int64_t cols, std::vector<double> values);

}  // namespace snvs::ad
