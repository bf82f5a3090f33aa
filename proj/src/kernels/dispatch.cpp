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

#include <cstdlib>
#include <string>

#include "snvs/error.hpp"
#include "snvs/kernels/kernels.hpp"

namespace snvs::kernels {

namespace {

struct Table {
  void (*gather_gemm)(const GatherGemm&);
  void (*scatter_gemm)(const ScatterGemm&);
  void (*outer_accumulate)(const OuterAccumulate&);
};

Table table_for(Isa isa) {
  switch (isa) {
#if defined(SNVS_HAVE_AVX512)
    case Isa::kAvx512:
      return {avx512::gather_gemm, avx512::scatter_gemm, avx512::outer_accumulate};
#endif
#if defined(SNVS_HAVE_AVX2)
    case Isa::kAvx2:
      return {avx2::gather_gemm, avx2::scatter_gemm, avx2::outer_accumulate};
#endif
    default:
      return {generic::gather_gemm, generic::scatter_gemm, generic::outer_accumulate};
  }
}

Isa initial_isa() {
  if (const char* env = std::getenv("SNVS_ISA")) {
    const std::string s(env);
    if (s == "generic") return Isa::kGeneric;
    if (s == "avx2" && isa_supported(Isa::kAvx2)) return Isa::kAvx2;
    if (s == "avx512" && isa_supported(Isa::kAvx512)) return Isa::kAvx512;
  }
  return best_supported_isa();
}

struct State {
  Isa isa;
  Table fns;
  State() : isa(initial_isa()), fns(table_for(isa)) {}
};

State& state() {
  static State s;
  return s;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kAvx512:
      return "avx512";
    case Isa::kAvx2:
      return "avx2";
    default:
      return "generic";
  }
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kGeneric:
      return true;
    case Isa::kAvx2:
#if defined(SNVS_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::kAvx512:
#if defined(SNVS_HAVE_AVX512) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa best_supported_isa() {
  if (isa_supported(Isa::kAvx512)) return Isa::kAvx512;
  if (isa_supported(Isa::kAvx2)) return Isa::kAvx2;
  return Isa::kGeneric;
}

Isa active_isa() { return state().isa; }

void set_active_isa(Isa isa) {
  SNVS_REQUIRE(isa_supported(isa), "kernel variant not supported on this CPU/build");
  state().isa = isa;
  state().fns = table_for(isa);
}

void gather_gemm(const GatherGemm& args) { state().fns.gather_gemm(args); }
void scatter_gemm(const ScatterGemm& args) { state().fns.scatter_gemm(args); }
void outer_accumulate(const OuterAccumulate& args) { state().fns.outer_accumulate(args); }

}  // namespace snvs::kernels
