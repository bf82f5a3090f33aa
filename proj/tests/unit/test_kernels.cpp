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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "snvs/kernels/kernels.hpp"

using namespace snvs::kernels;

namespace {

struct Problem {
  int rows, taps, cin, cout, src_rows;
  std::vector<std::int32_t> table;
  std::vector<double> a, b, c, d;
};

Problem make_problem(std::mt19937_64& rng, int rows, int taps, int cin, int cout) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Problem p{rows, taps, cin, cout, rows + 7, {}, {}, {}, {}, {}};
  std::uniform_int_distribution<int> pick(-1, p.src_rows - 1);
  p.table.resize(static_cast<std::size_t>(rows) * taps);
  for (auto& t : p.table) t = pick(rng);
  p.a.resize(static_cast<std::size_t>(p.src_rows) * cin);
  p.b.resize(static_cast<std::size_t>(taps) * cin * cout);
  p.c.resize(static_cast<std::size_t>(rows) * cout);
  p.d.resize(static_cast<std::size_t>(rows) * cout);
  for (auto* v : {&p.a, &p.b, &p.c, &p.d})
    for (auto& x : *v) x = u(rng);
  return p;
}

double max_abs_diff(const std::vector<double>& x, const std::vector<double>& y) {
  double m = 0;
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

std::vector<Isa> vector_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kAvx2, Isa::kAvx512})
    if (isa_supported(isa)) out.push_back(isa);
  return out;
}

// Direct triple loop, independent of every kernel variant.
std::vector<double> naive_gather(const Problem& p) {
  std::vector<double> c = p.c;
  for (int r = 0; r < p.rows; ++r)
    for (int k = 0; k < p.taps; ++k) {
      const int s = p.table[static_cast<std::size_t>(r * p.taps + k)];
      if (s < 0) continue;
      for (int o = 0; o < p.cout; ++o)
        for (int j = 0; j < p.cin; ++j)
          c[static_cast<std::size_t>(r * p.cout + o)] += p.a[static_cast<std::size_t>(s * p.cin + j)] *
                                                          p.b[static_cast<std::size_t>((k * p.cin + j) * p.cout + o)];
    }
  return c;
}

}  // namespace

TEST_CASE("generic gather_gemm matches the naive triple loop") {
  std::mt19937_64 rng(1);
  for (auto [rows, taps, cin, cout] : {std::array{5, 3, 4, 7}, std::array{17, 27, 32, 32}, std::array{3, 1, 1, 3}}) {
    Problem p = make_problem(rng, rows, taps, cin, cout);
    const auto ref = naive_gather(p);
    generic::gather_gemm({p.rows, p.taps, p.table.data(), p.a.data(), p.cin, p.cin, p.b.data(), p.cout, p.c.data(), p.cout});
    CHECK(max_abs_diff(ref, p.c) < 1e-12);
  }
}

TEST_CASE("vector kernel variants agree with the scalar reference") {
  std::mt19937_64 rng(2);
  const auto isas = vector_isas();
  for (auto [rows, taps, cin, cout] :
       {std::array{9, 27, 32, 32}, std::array{13, 8, 35, 17}, std::array{4, 1, 3, 64}, std::array{70, 9, 33, 3},
        std::array{2, 2, 1, 1}, std::array{130, 1, 64, 24}}) {
    const Problem base = make_problem(rng, rows, taps, cin, cout);
    // gather
    Problem ref = base;
    generic::gather_gemm({ref.rows, ref.taps, ref.table.data(), ref.a.data(), ref.cin, ref.cin, ref.b.data(), ref.cout,
                          ref.c.data(), ref.cout});
    // scatter: B blocks reinterpreted as (cout x cin)
    std::vector<double> ref_a = base.a;
    generic::scatter_gemm({base.rows, base.taps, base.table.data(), base.d.data(), base.cout, base.cout, base.b.data(),
                           base.cin, ref_a.data(), base.cin});
    // outer
    std::vector<double> ref_g = base.b;
    generic::outer_accumulate({base.rows, base.taps, base.table.data(), base.a.data(), base.cin, base.cin,
                               base.d.data(), base.cout, base.cout, ref_g.data()});
    for (Isa isa : isas) {
      CAPTURE(isa_name(isa));
      auto gather = isa == Isa::kAvx2 ? avx2::gather_gemm : avx512::gather_gemm;
      auto scatter = isa == Isa::kAvx2 ? avx2::scatter_gemm : avx512::scatter_gemm;
      auto outer = isa == Isa::kAvx2 ? avx2::outer_accumulate : avx512::outer_accumulate;
      Problem p = base;
      gather({p.rows, p.taps, p.table.data(), p.a.data(), p.cin, p.cin, p.b.data(), p.cout, p.c.data(), p.cout});
      CHECK(max_abs_diff(ref.c, p.c) < 1e-11);
      std::vector<double> a = base.a;
      scatter({base.rows, base.taps, base.table.data(), base.d.data(), base.cout, base.cout, base.b.data(), base.cin,
               a.data(), base.cin});
      CHECK(max_abs_diff(ref_a, a) < 1e-11);
      std::vector<double> g = base.b;
      outer({base.rows, base.taps, base.table.data(), base.a.data(), base.cin, base.cin, base.d.data(), base.cout,
             base.cout, g.data()});
      CHECK(max_abs_diff(ref_g, g) < 1e-11);
    }
  }
}

TEST_CASE("row results do not depend on batch composition") {
  // Computing a row alone or inside a larger batch must give bitwise-equal output.
  std::mt19937_64 rng(4);
  Problem p = make_problem(rng, 11, 4, 32, 35);
  std::vector<double> full = p.c;
  gather_gemm({p.rows, p.taps, p.table.data(), p.a.data(), p.cin, p.cin, p.b.data(), p.cout, full.data(), p.cout});
  for (int r = 0; r < p.rows; ++r) {
    std::vector<double> one(p.c.begin() + r * p.cout, p.c.begin() + (r + 1) * p.cout);
    gather_gemm({1, p.taps, p.table.data() + r * p.taps, p.a.data(), p.cin, p.cin, p.b.data(), p.cout, one.data(), p.cout});
    CHECK(std::equal(one.begin(), one.end(), full.begin() + r * p.cout));
  }
}

TEST_CASE("isa selection") {
  CHECK(isa_supported(Isa::kGeneric));
  CHECK(isa_supported(best_supported_isa()));
  const Isa before = active_isa();
  set_active_isa(Isa::kGeneric);
  CHECK(active_isa() == Isa::kGeneric);
  set_active_isa(before);
  CHECK(active_isa() == before);
}
