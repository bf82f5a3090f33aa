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

#include <cmath>
#include <cstring>
#include <random>

#include "snvs/autodiff/grad_check.hpp"
#include "snvs/renderer/renderer.hpp"

using namespace snvs;
using namespace snvs::render;

namespace {

std::vector<VoxelHit> oracle_hits(const Ray& ray, const sg::SparseVoxelSet& v) {
  std::vector<VoxelHit> out;
  for (const auto& c : v.coords->coords()) {
    double te, tx;
    slab_interval(ray, v.frame, c, te, tx);
    if (tx > std::max(te, 0.0)) out.push_back({c, std::max(te, 0.0), tx});
  }
  std::sort(out.begin(), out.end(), [](const VoxelHit& a, const VoxelHit& b) {
    return a.t_enter != b.t_enter ? a.t_enter < b.t_enter : a.coord < b.coord;
  });
  return out;
}

sg::SparseVoxelSet random_voxels(std::mt19937_64& rng, int n, int extent, double vs) {
  std::uniform_int_distribution<int> d(0, extent - 1);
  std::vector<VoxelCoord> cs;
  for (int i = 0; i < n; ++i) cs.push_back({d(rng), d(rng), d(rng)});
  return {sg::make_coords(cs), sg::GridFrame{1, vs, Vec3(-0.3, 0.1, -0.2)}};
}

Ray random_ray(std::mt19937_64& rng, double extent) {
  std::uniform_real_distribution<double> u(-0.5 * extent, 1.5 * extent);
  std::normal_distribution<double> n(0.0, 1.0);
  Ray r;
  r.origin = Vec3(u(rng), u(rng), u(rng));
  r.direction = Vec3(n(rng), n(rng), n(rng)).normalized();
  return r;
}

sg::SparseFeatureGrid random_embeddings(std::mt19937_64& rng, const sg::SparseVoxelSet& v, int d) {
  sg::SparseFeatureGrid g;
  g.coords = sg::vertex_coords(*v.coords);
  g.frame = v.frame;
  g.frame.kind = sg::LatticeKind::Vertex;
  g.features = ad::Tensor(g.coords->size(), d);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::int64_t i = 0; i < g.features.size(); ++i) g.features[i] = u(rng);
  return g;
}

void force_opaque(ad::ParamStore& store) {
  auto& w = store.at("dec.alpha.2.weight").value;
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = 0.0;
  store.at("dec.alpha.2.bias").value[0] = 1e5;
}

}  // namespace

TEST_CASE("intersect_voxels examples") {
  sg::SparseVoxelSet unit{sg::make_coords({{0, 0, 0}}), sg::GridFrame{1, 1.0}};
  const auto hits = intersect_voxels({Vec3(-1, 0.05, 0.05), Vec3(1, 0, 0)}, unit);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].t_enter == 1.0);
  CHECK(hits[0].t_exit == 2.0);
  CHECK(intersect_voxels({Vec3(-1, 3, 0.5), Vec3(1, 0, 0)}, unit).empty());
  // origin inside: interval clipped at zero
  const auto inside = intersect_voxels({Vec3(0.5, 0.5, 0.5), Vec3(0, 0, 1)}, unit);
  REQUIRE(inside.size() == 1);
  CHECK(inside[0].t_enter == 0.0);
  CHECK(inside[0].t_exit == 0.5);
  CHECK(intersect_voxels({Vec3(0, 0, 0), Vec3(1, 0, 0)}, sg::SparseVoxelSet{}).empty());
}

TEST_CASE("traversal equals the slab oracle on random rays") {
  std::mt19937_64 rng(1);
  int mismatches = 0, nonempty = 0;
  for (int scene = 0; scene < 4; ++scene) {
    const auto v = random_voxels(rng, 150, 10, 0.1);
    for (int i = 0; i < 1000; ++i) {
      const Ray r = random_ray(rng, 1.0);
      const auto got = intersect_voxels(r, v);
      const auto expect = oracle_hits(r, v);
      if (got != expect) ++mismatches;
      if (!got.empty()) ++nonempty;
    }
  }
  CHECK(mismatches == 0);
  CHECK(nonempty > 500);
  // axis-aligned rays through lattice planes exercise the tie handling
  const auto v = random_voxels(rng, 300, 8, 0.25);
  for (int i = 0; i < 200; ++i) {
    std::uniform_int_distribution<int> d(-2, 10);
    Ray r{v.frame.origin + 0.25 * Vec3(d(rng), d(rng), d(rng)), Vec3(1, 1, (i % 3) - 1.0).normalized()};
    const auto got = intersect_voxels(r, v);
    const auto expect = oracle_hits(r, v);
    if (got != expect) {
      MESSAGE("origin " << r.origin.transpose() << " dir " << r.direction.transpose());
      for (const auto& h : got) MESSAGE("got " << h.coord.i << h.coord.j << h.coord.k << " " << h.t_enter << " " << h.t_exit);
      for (const auto& h : expect) MESSAGE("exp " << h.coord.i << h.coord.j << h.coord.k << " " << h.t_enter << " " << h.t_exit);
    }
    CHECK(got == expect);
  }
}

TEST_CASE("sample_ray") {
  RenderConfig cfg;
  cfg.step_size = 0.25;
  const auto one = sample_ray({{VoxelCoord{}, 1.0, 1.25}}, cfg);
  REQUIRE(one.size() == 1);
  CHECK(one.t[0] == 1.125);
  CHECK(one.delta[0] == 0.25);
  CHECK(sample_ray({}, cfg).size() == 0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<VoxelHit> hits;
    double t = u(rng), total = 0.0;
    for (int h = 0; h < 5; ++h) {
      const double len = 0.01 + u(rng);
      hits.push_back({VoxelCoord{h, 0, 0}, t, t + len});
      total += len;
      t += len + u(rng);
    }
    const auto s = sample_ray(hits, cfg);
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      sum += s.delta[i];
      CHECK(s.delta[i] > 0.0);
      if (i) CHECK(s.t[i] > s.t[i - 1]);
    }
    CHECK(std::abs(sum - total) < 1e-9);
  }
  cfg.max_samples = 3;
  CHECK(sample_ray({{VoxelCoord{}, 0.0, 10.0}}, cfg).size() == 3);
}

TEST_CASE("decode") {
  std::mt19937_64 rng(3);
  const DecoderConfig cfg;
  ad::ParamStore zero;
  init_decoders(zero, cfg, rng, true);
  std::uniform_real_distribution<double> u(-3, 3);
  ad::Tensor e(200, 32), view(200, 24);
  for (std::int64_t i = 0; i < e.size(); ++i) e[i] = u(rng);
  for (std::int64_t i = 0; i < view.size(); ++i) view[i] = u(rng);
  {
    ad::Tape t(false);
    const auto d = decode(t, zero, cfg, t.constant(e), t.constant(view));
    CHECK(d.sigma.value()[7] == doctest::Approx(std::log(2.0)));
    CHECK(d.rgb.value()(5, 1) == 0.5);
  }
  ad::ParamStore store;
  init_decoders(store, cfg, rng);
  ad::Tensor big(10000, 32), bigview(10000, 24);
  std::normal_distribution<double> n(0.0, 10.0);
  for (std::int64_t i = 0; i < big.size(); ++i) big[i] = n(rng);
  ad::Tape t(false);
  const auto d = decode(t, store, cfg, t.constant(big), t.constant(bigview));
  double lo = 1.0;
  for (std::int64_t i = 0; i < 10000; ++i) lo = std::min(lo, d.sigma.value()[i]);
  CHECK(lo >= 0.0);
  DecoderConfig shared = cfg;
  shared.disentangled = false;
  ad::Tape t2(false);
  const auto d1 = decode(t2, store, cfg, t2.constant(e), t2.constant(view));
  const auto d2 = decode(t2, store, shared, t2.constant(e), t2.constant(view));
  CHECK_FALSE(d1.sigma.value() == d2.sigma.value());
  CHECK_FALSE(d1.rgb.value() == d2.rgb.value());
}

TEST_CASE("composite examples and conservation") {
  RenderConfig cfg;
  cfg.background = Vec3(0.2, 0.3, 0.4);
  auto run = [&](std::vector<double> sigma, std::vector<double> t, std::vector<double> delta, ad::Tape& tape) {
    auto L = std::make_shared<CompositeLayout>();
    L->offsets = {0, static_cast<std::int64_t>(sigma.size())};
    L->t = t;
    L->delta = delta;
    L->depth_scale = {1.0};
    const std::int64_t S = static_cast<std::int64_t>(sigma.size());
    ad::Tensor rgb(S, 3);
    for (std::int64_t i = 0; i < S; ++i) rgb(i, 0) = 0.1 * (i + 1);
    return composite(L, tape.constant(ad::Tensor(S, 1, sigma)), tape.constant(rgb),
                     tape.constant(ad::Tensor(S, 2, 1.0)), cfg).value();
  };
  ad::Tape t;
  const auto opaque = run({1e6, 1.0}, {1.0, 2.0}, {0.1, 0.1}, t);
  CHECK(opaque(0, kColRgb) == doctest::Approx(0.1));
  CHECK(opaque(0, kColDepth) == doctest::Approx(1.0));
  CHECK(opaque(0, kColOpacity) == doctest::Approx(1.0));
  const auto empty = run({0.0, 0.0}, {1.0, 2.0}, {0.1, 0.1}, t);
  CHECK(empty(0, kColRgb + 2) == 0.4);
  CHECK(empty(0, kColOpacity) == 0.0);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int r = 0; r < 1000; ++r) {
    const int n = 1 + static_cast<int>(u(rng) * 40);
    std::vector<double> s(n), d(n), w;
    for (int i = 0; i < n; ++i) s[i] = 50.0 * u(rng) * u(rng), d[i] = 0.05 * u(rng);
    double tf;
    composite_weights(s, d, 1e-3, w, tf);
    double sum = tf;
    for (double x : w) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("composite gradient") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto L = std::make_shared<CompositeLayout>();
  L->offsets = {0, 5, 5, 12};
  for (int r = 0; r < 2; ++r) {
    double t = 0.5;
    for (int i = 0; i < (r ? 7 : 5); ++i) {
      L->delta.push_back(0.05 + 0.1 * u(rng));
      L->t.push_back(t + L->delta.back() / 2);
      t += L->delta.back() + 0.1 * u(rng);
    }
  }
  L->depth_scale = {0.9, 1.0, 0.8};
  ad::ParamStore store;
  std::vector<double> sig(12), rgb(36), feat(48);
  for (auto& x : sig) x = 6.0 * u(rng);
  for (auto& x : rgb) x = u(rng);
  for (auto& x : feat) x = u(rng) - 0.5;
  store.add("sigma", {12, 1}, sig);
  store.add("rgb", {12, 3}, rgb);
  store.add("feat", {12, 4}, feat);
  RenderConfig cfg;
  cfg.background = Vec3(0.3, 0.6, 0.9);
  ad::Tensor target(3, 9);
  for (std::int64_t i = 0; i < target.size(); ++i) target[i] = u(rng);
  auto f = [&](ad::Tape& t) {
    const auto out = composite(L, t.param(store, "sigma"), t.param(store, "rgb"), t.param(store, "feat"), cfg);
    return ad::sum(ad::square(ad::sub(out, t.constant(target))));
  };
  const auto r = ad::grad_check(store, f, {1e-3, 12, 7});
  CHECK(r.checked >= 30);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("render_rays gradient on a two-voxel scene") {
  std::mt19937_64 rng(6);
  sg::SparseVoxelSet v{sg::make_coords({{0, 0, 0}, {1, 0, 0}}), sg::GridFrame{1, 0.5}};
  const auto emb = random_embeddings(rng, v, 32);
  ad::ParamStore store;
  DecoderConfig dcfg;
  dcfg.hidden = 8;
  init_decoders(store, dcfg, rng);
  store.add("emb", {emb.size(), 32}, std::vector<double>(emb.features.data(), emb.features.data() + emb.features.size()));
  RenderConfig rcfg;
  rcfg.step_size = 0.2;
  RayBatch rays;
  for (int i = 0; i < 6; ++i) {
    rays.rays.push_back({Vec3(-0.5, 0.1 + 0.06 * i, 0.37 - 0.05 * i), Vec3(1, 0.02 * i, 0.01).normalized()});
    rays.depth_scale.push_back(1.0);
  }
  ad::Tensor target(6, 37, 0.4);
  auto f = [&](ad::Tape& t) {
    const SceneRep scene{v, emb.coords, t.param(store, "emb")};
    return ad::mean(ad::square(ad::sub(render_rays(t, store, scene, rays, dcfg, rcfg), t.constant(target))));
  };
  const auto r = ad::grad_check(store, f, {1e-3, 5, 8});
  CHECK(r.checked >= 40);
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("render_view") {
  std::mt19937_64 rng(7);
  ad::ParamStore store;
  const DecoderConfig dcfg;
  init_decoders(store, dcfg, rng);
  RenderConfig rcfg;
  rcfg.background = Vec3(0.1, 0.2, 0.3);
  const CameraIntrinsics K{20.0, 20.0, 8.0, 6.0, 16, 12};
  const Pose pose = Pose::look_at(Vec3(0.5, -2.0, 0.5), Vec3(0.5, 0.5, 0.5));

  SUBCASE("empty set renders background") {
    sg::SparseFeatureGrid none;
    none.features = ad::Tensor(0, 32);
    const auto im = render_view(none, sg::SparseVoxelSet{}, pose, K, store, dcfg, rcfg);
    CHECK(im.width() == 8);
    CHECK(im.height() == 6);
    CHECK(im.rgb.at(3, 2, 2) == 0.3);
    CHECK(im.opacity.at(3, 2) == 0.0);
  }
  SUBCASE("single opaque voxel filling the view") {
    sg::SparseVoxelSet v{sg::make_coords({{0, 0, 0}}), sg::GridFrame{1, 1.0}};
    const auto emb = random_embeddings(rng, v, 32);
    force_opaque(store);
    rcfg.step_size = 0.05;
    const Pose close = Pose::look_at(Vec3(0.5, -0.3, 0.5), Vec3(0.5, 0.5, 0.5));
    const auto im = render_view(emb, v, close, K, store, dcfg, rcfg);
    CHECK(im.feature.channels() == 32);
    const auto half = K.half();
    for (int y = 0; y < im.height(); ++y)
      for (int x = 0; x < im.width(); ++x) {
        const Ray r = pixel_ray(half, close, x, y);
        double te, tx;
        slab_interval(r, v.frame, {0, 0, 0}, te, tx);
        const double z = te * r.direction.dot(close.rotation.col(2));
        CHECK(std::abs(im.depth.at(x, y) - z) <= rcfg.step_size);
        CHECK(im.opacity.at(x, y) == doctest::Approx(1.0));
      }
  }
  SUBCASE("render_rays agrees bitwise with render_view; duplicates agree") {
    std::mt19937_64 r2(8);
    std::vector<VoxelCoord> cs;
    std::uniform_int_distribution<int> d(0, 4);
    for (int i = 0; i < 40; ++i) cs.push_back({d(r2), d(r2), d(r2)});
    sg::SparseVoxelSet v{sg::make_coords(cs), sg::GridFrame{1, 0.25}};
    const auto emb = random_embeddings(r2, v, 32);
    const auto im = render_view(emb, v, pose, K, store, dcfg, rcfg);
    auto rays = pixel_rays(K.half(), pose);
    rays.rays.push_back(rays.rays[17]);
    rays.depth_scale.push_back(rays.depth_scale[17]);
    ad::Tape t(false);
    const auto out = render_rays(t, store, SceneRep{v, emb.coords, t.constant(emb.features)}, rays, dcfg, rcfg).value();
    const auto im2 = to_feature_image(ad::Tensor(48, out.cols(), std::vector<double>(out.data(), out.data() + 48 * out.cols())), 8, 6);
    CHECK(im2.rgb == im.rgb);
    CHECK(im2.depth == im.depth);
    CHECK(im2.feature == im.feature);
    CHECK(std::memcmp(out.data() + 17 * out.cols(), out.data() + 48 * out.cols(), sizeof(double) * out.cols()) == 0);
    double hit = 0.0;
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x) hit += im.opacity.at(x, y);
    CHECK(hit > 0.0);
  }
}

TEST_CASE("embedding interpolation is continuous across shared faces") {
  std::mt19937_64 rng(9);
  // offsets are in voxel units
  sg::SparseVoxelSet v{sg::make_coords({{0, 0, 0}, {1, 0, 0}}), sg::GridFrame{1, 1.0}};
  const auto emb = random_embeddings(rng, v, 8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double y = u(rng), z = u(rng);
    const auto a = sg::interpolate(emb, sg::gather_corner_features(emb, v, Vec3(1.0 - 1e-6, y, z)));
    const auto b = sg::interpolate(emb, sg::gather_corner_features(emb, v, Vec3(1.0 + 1e-6, y, z)));
    for (int c = 0; c < 8; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-5);
  }
}

TEST_CASE("opaque convex object: depth inside the first hit interval") {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<VoxelCoord> cs;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) cs.push_back({i, j, k});
  sg::SparseVoxelSet v{sg::make_coords(cs), sg::GridFrame{1, 0.1}};
  const auto emb = random_embeddings(rng, v, 32);
  ad::ParamStore store;
  const DecoderConfig dcfg;
  init_decoders(store, dcfg, rng);
  force_opaque(store);
  RenderConfig rcfg;
  RayBatch rays;
  for (int i = 0; i < 100; ++i) {
    const Ray r{Vec3(0.15, 0.15, 0.15) + 1.0 * Vec3(u(rng) - 0.5, -1.0, u(rng) - 0.5), Vec3::Zero()};
    rays.rays.push_back({r.origin, (Vec3(0.05 + 0.2 * u(rng), 0.05 + 0.2 * u(rng), 0.05 + 0.2 * u(rng)) - r.origin).normalized()});
    rays.depth_scale.push_back(1.0);
  }
  ad::Tape t(false);
  const auto out = render_rays(t, store, SceneRep{v, emb.coords, t.constant(emb.features)}, rays, dcfg, rcfg).value();
  for (int i = 0; i < 100; ++i) {
    const auto hits = intersect_voxels(rays.rays[i], v);
    REQUIRE(!hits.empty());
    CHECK(out(i, kColDepth) >= hits[0].t_enter);
    CHECK(out(i, kColDepth) <= hits[0].t_exit);
  }
}
