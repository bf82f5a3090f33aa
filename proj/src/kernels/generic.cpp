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

#include "snvs/kernels/kernels.hpp"

#include <cstddef>
#include <vector>

namespace snvs::kernels::generic {

namespace {

inline const double* row_of(const double* base, int ld, std::int64_t r) { return base + r * ld; }

}  // namespace

void gather_gemm(const GatherGemm& p) {
  std::vector<double> acc(static_cast<std::size_t>(p.cout));
  for (int r = 0; r < p.rows; ++r) {
    double* c = p.c + static_cast<std::int64_t>(r) * p.ldc;
    for (int o = 0; o < p.cout; ++o) acc[o] = c[o];
    for (int k = 0; k < p.taps; ++k) {
      const std::int32_t src = p.table ? p.table[static_cast<std::int64_t>(r) * p.taps + k] : r;
      if (src < 0) continue;
      const double* x = row_of(p.a, p.lda, src);
      const double* w = p.b + static_cast<std::int64_t>(k) * p.cin * p.cout;
      for (int j = 0; j < p.cin; ++j) {
        const double xj = x[j];
        const double* wj = w + static_cast<std::int64_t>(j) * p.cout;
        for (int o = 0; o < p.cout; ++o) acc[o] += xj * wj[o];
      }
    }
    for (int o = 0; o < p.cout; ++o) c[o] = acc[o];
  }
}

void scatter_gemm(const ScatterGemm& p) {
  std::vector<double> acc(static_cast<std::size_t>(p.cin));
  for (int r = 0; r < p.rows; ++r) {
    const double* dr = row_of(p.d, p.ldd, r);
    for (int k = 0; k < p.taps; ++k) {
      const std::int32_t dst = p.table ? p.table[static_cast<std::int64_t>(r) * p.taps + k] : r;
      if (dst < 0) continue;
      const double* wt = p.bt + static_cast<std::int64_t>(k) * p.cout * p.cin;
      for (int i = 0; i < p.cin; ++i) acc[i] = 0.0;
      for (int j = 0; j < p.cout; ++j) {
        const double dj = dr[j];
        const double* wj = wt + static_cast<std::int64_t>(j) * p.cin;
        for (int i = 0; i < p.cin; ++i) acc[i] += dj * wj[i];
      }
      double* a = p.a + static_cast<std::int64_t>(dst) * p.lda;
      for (int i = 0; i < p.cin; ++i) a[i] += acc[i];
    }
  }
}

void outer_accumulate(const OuterAccumulate& p) {
  for (int k = 0; k < p.taps; ++k) {
    double* g = p.g + static_cast<std::int64_t>(k) * p.cin * p.cout;
    for (int r = 0; r < p.rows; ++r) {
      const std::int32_t src = p.table ? p.table[static_cast<std::int64_t>(r) * p.taps + k] : r;
      if (src < 0) continue;
      const double* x = row_of(p.a, p.lda, src);
      const double* dr = row_of(p.d, p.ldd, r);
      for (int i = 0; i < p.cin; ++i) {
        const double xi = x[i];
        double* gi = g + static_cast<std::int64_t>(i) * p.cout;
        for (int o = 0; o < p.cout; ++o) gi[o] += xi * dr[o];
      }
    }
  }
}

}  // namespace snvs::kernels::generic
