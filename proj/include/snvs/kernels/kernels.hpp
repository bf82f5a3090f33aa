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
#include <string_view>

// Dense inner loops shared by every learned component. Each entry point has a
// scalar reference implementation (namespace generic) and vectorized variants
// selected once at startup from the CPU feature set.

namespace snvs::kernels {

enum class Isa { kGeneric, kAvx2, kAvx512 };

std::string_view isa_name(Isa isa);

/// Highest variant supported by both the build and the running CPU.
Isa best_supported_isa();
bool isa_supported(Isa isa);

/// Active variant. Defaults to best_supported_isa(), or SNVS_ISA=generic|avx2|avx512 when set.
Isa active_isa();
/// Overrides the active variant; throws if it is not supported. Not thread-safe.
void set_active_isa(Isa isa);

/// C[r] += sum_k A[table[r * taps + k]] * B_k for r in [0, rows).
/// B_k is the k-th (cin x cout) row-major block of `b`. Entries < 0 in `table` are skipped.
/// A null table means taps == 1 and row r of A maps to row r of C.
struct GatherGemm {
  int rows = 0;
  int taps = 1;
  const std::int32_t* table = nullptr;
  const double* a = nullptr;
  int lda = 0;
  int cin = 0;
  const double* b = nullptr;
  int cout = 0;
  double* c = nullptr;
  int ldc = 0;
};

/// A[table[r * taps + k]] += D[r] * Bt_k for every valid entry, in row-major (r, k) order.
/// Bt_k is the k-th (cout x cin) block of `bt`, i.e. the transposed forward weight.
struct ScatterGemm {
  int rows = 0;
  int taps = 1;
  const std::int32_t* table = nullptr;
  const double* d = nullptr;
  int ldd = 0;
  int cout = 0;
  const double* bt = nullptr;
  int cin = 0;
  double* a = nullptr;
  int lda = 0;
};

/// G_k += sum_r A[table[r * taps + k]]^T (outer) D[r]; G_k is the k-th (cin x cout) block of `g`.
struct OuterAccumulate {
  int rows = 0;
  int taps = 1;
  const std::int32_t* table = nullptr;
  const double* a = nullptr;
  int lda = 0;
  int cin = 0;
  const double* d = nullptr;
  int ldd = 0;
  int cout = 0;
  double* g = nullptr;
};

void gather_gemm(const GatherGemm& args);
void scatter_gemm(const ScatterGemm& args);
void outer_accumulate(const OuterAccumulate& args);

#define SNVS_KERNEL_DECLS                        \
  void gather_gemm(const GatherGemm& args);      \
  void scatter_gemm(const ScatterGemm& args);    \
  void outer_accumulate(const OuterAccumulate& args);

namespace generic {
SNVS_KERNEL_DECLS
}
namespace avx2 {
SNVS_KERNEL_DECLS
}
namespace avx512 {
SNVS_KERNEL_DECLS
}

#undef SNVS_KERNEL_DECLS

}  // namespace snvs::kernels
