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

#include <map>
#include <random>
#include <set>

#include "snvs/autodiff/grad_check.hpp"
#include "snvs/error.hpp"
#include "snvs/sparsegrid/sparsegrid.hpp"

using namespace snvs;
using namespace snvs::sg;

namespace {

constexpr int kN = 16;

SparseFeatureGrid random_grid(std::mt19937_64& rng, int count, int channels, int lo = 0, int hi = kN - 1) {
  std::uniform_int_distribution<int> coord(lo, hi);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::vector<VoxelCoord> cs;
  for (int n = 0; n < count; ++n) cs.push_back({coord(rng), coord(rng), coord(rng)});
  auto coords = make_coords(cs);
  ad::Tensor f(coords->size(), channels);
  for (std::int64_t i = 0; i < f.size(); ++i) f[i] = val(rng);
  return {coords, GridFrame{}, f};
}

ConvKernel random_kernel(std::mt19937_64& rng, int size, int cin, int cout) {
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  ConvKernel k(size, cin, cout);
  for (std::int64_t i = 0; i < k.weights.size(); ++i) k.weights[i] = val(rng);
  for (std::int64_t i = 0; i < k.bias.size(); ++i) k.bias[i] = val(rng);
  return k;
}

// Dense grid with a border so that dilated outputs and negative coords fit.
struct Dense {
  int lo, n, ch;
  std::vector<double> v;
  Dense(int lo_, int n_, int ch_) : lo(lo_), n(n_), ch(ch_), v(static_cast<std::size_t>(n_ * n_ * n_ * ch_), 0.0) {}
  bool inside(int i, int j, int k) const {
    return i >= lo && j >= lo && k >= lo && i < lo + n && j < lo + n && k < lo + n;
  }
  double* at(int i, int j, int k) {
    return v.data() + ((static_cast<std::size_t>(i - lo) * n + (j - lo)) * n + (k - lo)) * ch;
  }
};

Dense to_dense(const SparseFeatureGrid& g, int lo, int n) {
  Dense d(lo, n, static_cast<int>(g.channels()));
  for (std::int64_t r = 0; r < g.size(); ++r) {
    const auto& c = (*g.coords)[r];
    for (int ch = 0; ch < d.ch; ++ch) d.at(c.i, c.j, c.k)[ch] = g.features(r, ch);
  }
  return d;
}

}  // namespace

TEST_CASE("coord set lookup and order") {
  auto cs = make_coords({{3, 1, 2}, {-1, 0, 0}, {3, 1, 2}, {0, 0, -5}});
  REQUIRE(cs->size() == 3);
  CHECK((*cs)[0] == VoxelCoord{-1, 0, 0});
  CHECK((*cs)[2] == VoxelCoord{3, 1, 2});
  CHECK(cs->find({0, 0, -5}) == 1);
  CHECK(cs->find({9, 9, 9}) == -1);
  CHECK(CoordSet().find({0, 0, 0}) == -1);
}

TEST_CASE("voxelize examples") {
  SUBCASE("one point") {
    PointCloud pc{{Vec3(0.05, 0.05, 0.05)}, {Vec3(0.1, 0.2, 0.3)}};
    auto [set, grid] = voxelize(pc, 0.1, Vec3::Zero());
    REQUIRE(set.size() == 1);
    CHECK(grid.features(0, 1) == 0.2);
  }
  SUBCASE("two points in one cell average") {
    PointCloud pc{{Vec3(0.01, 0.01, 0.01), Vec3(0.09, 0.02, 0.03)}, {Vec3::Zero(), Vec3::Ones()}};
    auto [set, grid] = voxelize(pc, 0.1, Vec3::Zero());
    REQUIRE(set.size() == 1);
    CHECK(grid.features(0, 0) == 0.5);
  }
  SUBCASE("empty cloud") { CHECK_THROWS_AS(voxelize(PointCloud{}, 0.1, Vec3::Zero()), PreconditionError); }
  SUBCASE("random cloud matches brute-force grouping") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    PointCloud pc;
    for (int n = 0; n < 400; ++n) {
      pc.positions.push_back(Vec3(u(rng), u(rng), u(rng)));
      pc.colors.push_back(Vec3(u(rng) + 0.5, u(rng) + 0.5, u(rng) + 0.5));
    }
    const Vec3 origin(-0.6, -0.6, -0.6);
    auto [set, grid] = voxelize(pc, 0.1, origin);
    std::vector<VoxelCoord> cells;
    for (const auto& p : pc.positions) cells.push_back(world_to_voxel(p, origin, 0.1));
    std::vector<VoxelCoord> distinct;
    for (const auto& c : cells)
      if (std::find(distinct.begin(), distinct.end(), c) == distinct.end()) distinct.push_back(c);
    REQUIRE(set.size() == static_cast<std::int64_t>(distinct.size()));
    for (const auto& c : distinct) {
      Vec3 sum = Vec3::Zero();
      int count = 0;
      for (std::size_t n = 0; n < cells.size(); ++n)
        if (cells[n] == c) sum += pc.colors[n], ++count;
      const double* f = grid.find(c);
      REQUIRE(f != nullptr);
      for (int a = 0; a < 3; ++a) CHECK(f[a] == doctest::Approx(sum[a] / count).epsilon(1e-12));
    }
  }
}

TEST_CASE("vertex_set examples") {
  SparseVoxelSet one{make_coords({{0, 0, 0}}), {}};
  CHECK(vertex_set(one).size() == 8);
  SparseVoxelSet two{make_coords({{0, 0, 0}, {1, 0, 0}}), {}};
  CHECK(vertex_set(two).size() == 12);
  std::mt19937_64 rng(4);
  auto g = random_grid(rng, 60, 1, -4, 4);
  SparseVoxelSet rs{g.coords, {}};
  std::set<VoxelCoord> oracle;
  for (const auto& c : g.coords->coords())
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz) oracle.insert({c.i + dx, c.j + dy, c.k + dz});
  const auto v = vertex_set(rs);
  CHECK(v == std::vector<VoxelCoord>(oracle.begin(), oracle.end()));
}

TEST_CASE("sparse_conv trivial kernels") {
  std::mt19937_64 rng(5);
  const auto g = random_grid(rng, 50, 4);
  ConvKernel zero(3, 4, 4);
  const auto z = sparse_conv(g, zero, 1, false);
  CHECK(*z.coords == *g.coords);
  for (std::int64_t i = 0; i < z.features.size(); ++i) CHECK(z.features[i] == 0.0);
  ConvKernel id(3, 4, 4);
  for (int c = 0; c < 4; ++c) id.tap(13)[c * 4 + c] = 1.0;
  const auto same = sparse_conv(g, id, 1, false);
  CHECK(same.features == g.features);
  CHECK_THROWS_AS(sparse_conv(g, ConvKernel(3, 5, 4), 1, false), ShapeError);
}

TEST_CASE("sparse_conv matches a dense 3D convolution") {
  std::mt19937_64 rng(6);
  for (bool dil : {false, true}) {
    const auto g = random_grid(rng, 300, 3);
    const auto k = random_kernel(rng, 3, 3, 5);
    const auto out = sparse_conv(g, k, 1, dil);
    Dense d = to_dense(g, -1, kN + 2);
    if (dil) {
      std::set<VoxelCoord> expect;
      for (const auto& c : g.coords->coords())
        for (int t = 0; t < 27; ++t) expect.insert(c + offset3(t));
      CHECK(out.coords->coords() == std::vector<VoxelCoord>(expect.begin(), expect.end()));
    } else {
      CHECK(*out.coords == *g.coords);
    }
    double worst = 0.0;
    for (std::int64_t r = 0; r < out.size(); ++r) {
      const auto& q = (*out.coords)[r];
      for (int o = 0; o < 5; ++o) {
        double acc = k.bias[o];
        for (int t = 0; t < 27; ++t) {
          const auto s = q + offset3(t);
          if (!d.inside(s.i, s.j, s.k)) continue;
          for (int c = 0; c < 3; ++c) acc += d.at(s.i, s.j, s.k)[c] * k.weights((t * 3 + c), o);
        }
        worst = std::max(worst, std::abs(acc - out.features(r, o)));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("stride-2 sparse_conv matches dense downsampling") {
  std::mt19937_64 rng(7);
  const auto g = random_grid(rng, 200, 2);
  const auto k = random_kernel(rng, 2, 2, 3);
  const auto out = sparse_conv(g, k, 2, false);
  CHECK(out.frame.stride == 2);
  Dense d = to_dense(g, 0, kN);
  std::set<VoxelCoord> expect;
  for (const auto& c : g.coords->coords()) expect.insert(coarsen(c));
  CHECK(out.coords->coords() == std::vector<VoxelCoord>(expect.begin(), expect.end()));
  double worst = 0.0;
  for (std::int64_t r = 0; r < out.size(); ++r) {
    const auto& q = (*out.coords)[r];
    for (int o = 0; o < 3; ++o) {
      double acc = k.bias[o];
      for (int t = 0; t < 8; ++t) {
        const auto s = VoxelCoord{2 * q.i, 2 * q.j, 2 * q.k} + offset2(t);
        for (int c = 0; c < 2; ++c) acc += d.at(s.i, s.j, s.k)[c] * k.weights(t * 2 + c, o);
      }
      worst = std::max(worst, std::abs(acc - out.features(r, o)));
    }
  }
  CHECK(worst < 1e-12);
  CHECK_THROWS_AS(sparse_conv(g, random_kernel(rng, 3, 2, 3), 2, false), ShapeError);
}

TEST_CASE("generative transposed conv") {
  std::mt19937_64 rng(8);
  SparseFeatureGrid one{make_coords({{1, -1, 2}}), GridFrame{2}, ad::Tensor(1, 2, 0.5)};
  ConvKernel zero(2, 2, 3);
  zero.bias[1] = 0.25;
  const auto kids = generative_transposed_conv(one, zero);
  REQUIRE(kids.size() == 8);
  CHECK(kids.frame.stride == 1);
  CHECK((*kids.coords)[0] == VoxelCoord{2, -2, 4});
  CHECK((*kids.coords)[7] == VoxelCoord{3, -1, 5});
  for (std::int64_t r = 0; r < 8; ++r) CHECK(kids.features(r, 1) == 0.25);

  auto g = random_grid(rng, 40, 3, -5, 5);
  g.frame.stride = 4;
  const auto k = random_kernel(rng, 2, 3, 2);
  const auto out = generative_transposed_conv(g, k);
  CHECK(out.frame.stride == 2);
  CHECK(out.size() == 8 * g.size());
  double worst = 0.0;
  for (std::int64_t p = 0; p < g.size(); ++p) {
    const auto& c = (*g.coords)[p];
    for (int t = 0; t < 8; ++t) {
      const auto child = VoxelCoord{2 * c.i, 2 * c.j, 2 * c.k} + offset2(t);
      const double* f = out.find(child);
      REQUIRE(f != nullptr);
      for (int o = 0; o < 2; ++o) {
        double acc = k.bias[o];
        for (int i = 0; i < 3; ++i) acc += g.features(p, i) * k.weights(t * 3 + i, o);
        worst = std::max(worst, std::abs(acc - f[o]));
      }
    }
  }
  CHECK(worst < 1e-12);
  SparseFeatureGrid fine = g;
  fine.frame.stride = 1;
  CHECK_THROWS_AS(generative_transposed_conv(fine, k), PreconditionError);
}

TEST_CASE("prune") {
  std::mt19937_64 rng(9);
  const auto g = random_grid(rng, 30, 2);
  std::vector<double> hi(static_cast<std::size_t>(g.size()), 20.0), lo(hi.size(), -20.0), mixed(hi.size());
  CHECK(*prune(g, hi).coords == *g.coords);
  CHECK(prune(g, lo).size() == 0);
  std::normal_distribution<double> n(0.0, 2.0);
  for (auto& x : mixed) x = n(rng);
  const auto p = prune(g, mixed, 0.5);
  std::vector<VoxelCoord> expect;
  for (std::int64_t r = 0; r < g.size(); ++r)
    if (mixed[static_cast<std::size_t>(r)] > 0.0) expect.push_back((*g.coords)[r]);
  CHECK(p.coords->coords() == expect);
  for (std::int64_t r = 0; r < p.size(); ++r) CHECK(p.find((*p.coords)[r])[0] == g.find((*p.coords)[r])[0]);
  CHECK_THROWS_AS(prune(g, std::vector<double>(3, 0.0)), PreconditionError);
}

TEST_CASE("gather_corner_features") {
  SparseVoxelSet occ{make_coords({{0, 0, 0}, {1, 0, 0}}), GridFrame{1, 0.25, Vec3(1, 2, 3)}};
  SparseFeatureGrid emb;
  emb.coords = vertex_coords(*occ.coords);
  emb.frame = occ.frame;
  emb.frame.kind = LatticeKind::Vertex;
  emb.features = ad::Tensor(emb.size(), 2);
  for (std::int64_t r = 0; r < emb.size(); ++r) {
    const auto& v = (*emb.coords)[r];
    emb.features(r, 0) = 1.0 + 2.0 * v.i - v.j + 0.5 * v.k;  // affine: trilinear reproduces it
    emb.features(r, 1) = v.i * v.j * v.k;
  }
  SUBCASE("corner") {
    const auto s = gather_corner_features(emb, occ, Vec3(1.25, 2.0, 3.25));
    double total = 0.0;
    for (int t = 0; t < 8; ++t) total += s.weights[t];
    CHECK(total == doctest::Approx(1.0));
    const int t = tap2(VoxelCoord{1, 0, 1} - s.voxel);
    CHECK(s.weights[t] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.rows[t] == emb.coords->find({1, 0, 1}));
  }
  SUBCASE("center") {
    const auto s = gather_corner_features(emb, occ, Vec3(1.125, 2.125, 3.125));
    CHECK(s.voxel == VoxelCoord{0, 0, 0});
    for (int t = 0; t < 8; ++t) CHECK(s.weights[t] == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(s.missing == 0);
  }
  SUBCASE("outside") { CHECK_THROWS_AS(gather_corner_features(emb, occ, Vec3(0.5, 2.125, 3.125)), PreconditionError); }
  SUBCASE("shared face with an empty voxel resolves to the occupied side") {
    const auto s = gather_corner_features(emb, occ, Vec3(1.375, 2.25, 3.125));
    CHECK(s.voxel == VoxelCoord{1, 0, 0});
  }
  SUBCASE("random points: weights sum to one and match closed form") {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int n = 0; n < 200; ++n) {
      const Vec3 local(2.0 * u(rng), u(rng), u(rng));
      const Vec3 p = occ.frame.origin + 0.25 * local;
      const auto s = gather_corner_features(emb, occ, p);
      double total = 0.0;
      for (int t = 0; t < 8; ++t) total += s.weights[t];
      CHECK(std::abs(total - 1.0) < 1e-12);
      const auto f = interpolate(emb, s);
      CHECK(f[0] == doctest::Approx(1.0 + 2.0 * local.x() - local.y() + 0.5 * local.z()).epsilon(1e-10));
      const Vec3 fr = local - Vec3(s.voxel.i, 0, 0);
      CHECK(f[1] == doctest::Approx((s.voxel.i + fr.x()) * fr.y() * fr.z()).epsilon(1e-10));
    }
  }
}

TEST_CASE("gradients flow through sparse convolutions") {
  std::mt19937_64 rng(11);
  const auto g = random_grid(rng, 25, 3, 0, 5);
  ad::ParamStore store;
  store.add("x", {g.size(), 3}, std::vector<double>(g.features.data(), g.features.data() + g.features.size()));
  auto init = [&](const std::string& name, std::vector<std::int64_t> shape) {
    store.add_glorot(name, shape, shape[0] * shape[1], shape[2], rng);
  };
  init("c1", {27, 3, 4});
  init("down", {8, 4, 4});
  init("up", {8, 4, 2});
  store.add("b", {1, 2}, {0.1, -0.2});
  auto f = [&](ad::Tape& t) {
    SparseTensor x{g.coords, g.frame, t.param(store, "x")};
    auto h = sparse_conv(x, t.param(store, "c1"), ad::Var{}, 1, true);
    h.features = ad::softplus(h.features);
    auto d = sparse_conv(h, t.param(store, "down"), ad::Var{}, 2, false);
    auto u = generative_transposed_conv(d, t.param(store, "up"), t.param(store, "b"));
    return ad::mean(ad::square(align_to(u, *g.coords)));
  };
  const auto r = ad::grad_check(store, f, {1e-4, 10, 2});
  CHECK(r.checked >= 40);
  CHECK(r.max_relative_error < 1e-4);
}
