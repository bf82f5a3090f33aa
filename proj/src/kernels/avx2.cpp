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

// Compiled with -mavx2 -mfma; only reached when the CPU reports both.
#include <immintrin.h>

#include <cmath>

#include "snvs/kernels/kernels.hpp"

namespace snvs::kernels::avx2 {

namespace {

constexpr int kLanes = 4;

// acc[0..NV) += s * w[0..NV*4)
template <int NV>
inline void fma_block(__m256d* acc, double s, const double* w) {
  const __m256d b = _mm256_set1_pd(s);
  for (int v = 0; v < NV; ++v) acc[v] = _mm256_fmadd_pd(b, _mm256_loadu_pd(w + v * kLanes), acc[v]);
}

// y[o0 .. o0+NV*4) = init + sum_k sum_j x_k[j] * M_k[j, o0..]; `rows_of(k)` yields x_k or nullptr.
template <int NV, typename RowFn>
inline void block_product(const double* init, double* out, int o0, int taps, int n_in, int n_out, const double* m,
                          std::int64_t m_stride, RowFn&& rows_of) {
  __m256d acc[NV];
  for (int v = 0; v < NV; ++v) acc[v] = init ? _mm256_loadu_pd(init + o0 + v * kLanes) : _mm256_setzero_pd();
  for (int k = 0; k < taps; ++k) {
    const double* x = rows_of(k);
    if (!x) continue;
    const double* mk = m + k * m_stride + o0;
    for (int j = 0; j < n_in; ++j) fma_block<NV>(acc, x[j], mk + static_cast<std::int64_t>(j) * n_out);
  }
  for (int v = 0; v < NV; ++v) _mm256_storeu_pd(out + o0 + v * kLanes, acc[v]);
}

template <typename RowFn>
inline void row_product(const double* init, double* out, int taps, int n_in, int n_out, const double* m,
                        std::int64_t m_stride, RowFn&& rows_of) {
  int o = 0;
  for (; o + 32 <= n_out; o += 32) block_product<8>(init, out, o, taps, n_in, n_out, m, m_stride, rows_of);
  for (; o + 16 <= n_out; o += 16) block_product<4>(init, out, o, taps, n_in, n_out, m, m_stride, rows_of);
  for (; o + 4 <= n_out; o += 4) block_product<1>(init, out, o, taps, n_in, n_out, m, m_stride, rows_of);
  for (; o < n_out; ++o) {
    double acc = init ? init[o] : 0.0;
    for (int k = 0; k < taps; ++k) {
      const double* x = rows_of(k);
      if (!x) continue;
      const double* mk = m + k * m_stride + o;
      for (int j = 0; j < n_in; ++j) acc = std::fma(x[j], mk[static_cast<std::int64_t>(j) * n_out], acc);
    }
    out[o] = acc;
  }
}

}  // namespace

void gather_gemm(const GatherGemm& p) {
  const std::int64_t stride = static_cast<std::int64_t>(p.cin) * p.cout;
  for (int r = 0; r < p.rows; ++r) {
    double* c = p.c + static_cast<std::int64_t>(r) * p.ldc;
    const std::int32_t* t = p.table ? p.table + static_cast<std::int64_t>(r) * p.taps : nullptr;
    auto rows_of = [&](int k) -> const double* {
      const std::int32_t src = t ? t[k] : r;
      return src < 0 ? nullptr : p.a + static_cast<std::int64_t>(src) * p.lda;
    };
    row_product(c, c, p.taps, p.cin, p.cout, p.b, stride, rows_of);
  }
}

void scatter_gemm(const ScatterGemm& p) {
  const std::int64_t stride = static_cast<std::int64_t>(p.cout) * p.cin;
  alignas(64) double tmp[256];
  for (int r = 0; r < p.rows; ++r) {
    const double* dr = p.d + static_cast<std::int64_t>(r) * p.ldd;
    for (int k = 0; k < p.taps; ++k) {
      const std::int32_t dst = p.table ? p.table[static_cast<std::int64_t>(r) * p.taps + k] : r;
      if (dst < 0) continue;
      double* a = p.a + static_cast<std::int64_t>(dst) * p.lda;
      const double* wt = p.bt + k * stride;
      auto one = [&](int) -> const double* { return dr; };
      if (p.cin <= 256) {
        row_product(nullptr, tmp, 1, p.cout, p.cin, wt, 0, one);
        int i = 0;
        for (; i + kLanes <= p.cin; i += kLanes)
          _mm256_storeu_pd(a + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(tmp + i)));
        for (; i < p.cin; ++i) a[i] += tmp[i];
      } else {
        generic::scatter_gemm({1, 1, nullptr, dr, p.ldd, p.cout, wt, p.cin, a, p.lda});
      }
    }
  }
}

void outer_accumulate(const OuterAccumulate& p) {
  constexpr int kTile = 64;
  for (int k = 0; k < p.taps; ++k) {
    double* g = p.g + static_cast<std::int64_t>(k) * p.cin * p.cout;
    for (int r0 = 0; r0 < p.rows; r0 += kTile) {
      const int r1 = r0 + kTile < p.rows ? r0 + kTile : p.rows;
      const double* xs[kTile];
      const double* ds[kTile];
      int n = 0;
      for (int r = r0; r < r1; ++r) {
        const std::int32_t src = p.table ? p.table[static_cast<std::int64_t>(r) * p.taps + k] : r;
        if (src < 0) continue;
        xs[n] = p.a + static_cast<std::int64_t>(src) * p.lda;
        ds[n] = p.d + static_cast<std::int64_t>(r) * p.ldd;
        ++n;
      }
      if (n == 0) continue;
      for (int i = 0; i < p.cin; ++i) {
        double* gi = g + static_cast<std::int64_t>(i) * p.cout;
        int o = 0;
        for (; o + 16 <= p.cout; o += 16) {
          __m256d a0 = _mm256_loadu_pd(gi + o), a1 = _mm256_loadu_pd(gi + o + 4);
          __m256d a2 = _mm256_loadu_pd(gi + o + 8), a3 = _mm256_loadu_pd(gi + o + 12);
          for (int s = 0; s < n; ++s) {
            const __m256d b = _mm256_set1_pd(xs[s][i]);
            const double* d = ds[s] + o;
            a0 = _mm256_fmadd_pd(b, _mm256_loadu_pd(d), a0);
            a1 = _mm256_fmadd_pd(b, _mm256_loadu_pd(d + 4), a1);
            a2 = _mm256_fmadd_pd(b, _mm256_loadu_pd(d + 8), a2);
            a3 = _mm256_fmadd_pd(b, _mm256_loadu_pd(d + 12), a3);
          }
          _mm256_storeu_pd(gi + o, a0);
          _mm256_storeu_pd(gi + o + 4, a1);
          _mm256_storeu_pd(gi + o + 8, a2);
          _mm256_storeu_pd(gi + o + 12, a3);
        }
        for (; o + 4 <= p.cout; o += 4) {
          __m256d a0 = _mm256_loadu_pd(gi + o);
          for (int s = 0; s < n; ++s) a0 = _mm256_fmadd_pd(_mm256_set1_pd(xs[s][i]), _mm256_loadu_pd(ds[s] + o), a0);
          _mm256_storeu_pd(gi + o, a0);
        }
        for (; o < p.cout; ++o) {
          double acc = gi[o];
          for (int s = 0; s < n; ++s) acc = std::fma(xs[s][i], ds[s][o], acc);
          gi[o] = acc;
        }
      }
    }
  }
}

}  // namespace snvs::kernels::avx2
