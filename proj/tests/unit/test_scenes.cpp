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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "snvs/error.hpp"
#include "snvs/renderer/renderer.hpp"
#include "snvs/scenes/scenes.hpp"

using namespace snvs;
using namespace snvs::scenes;

namespace {

ProceduralScene empty_room(Vec3 hi) {
  ProceduralScene s;
  s.room_hi = hi;
  return s;
}

std::vector<RgbdFrame> sweep_frames(const ProceduralScene& s, int positions, int headings, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CaptureConfig cfg;
  cfg.positions = positions;
  cfg.headings = headings;
  std::vector<RgbdFrame> frames;
  for (const auto& p : capture_poses(s, cfg, rng)) frames.push_back(raycast_gt(s, default_intrinsics(), p));
  return frames;
}

// Homogeneous-matrix reprojection, written independently of overlap_mask.
std::size_t overlap_oracle(const RgbdFrame& q, const RgbdFrame& s, double tol) {
  Eigen::Matrix4d Tq = Eigen::Matrix4d::Identity(), Ts = Eigen::Matrix4d::Identity();
  Tq.topLeftCorner<3, 3>() = q.pose.rotation;
  Tq.topRightCorner<3, 1>() = q.pose.translation;
  Ts.topLeftCorner<3, 3>() = s.pose.rotation.transpose();
  Ts.topRightCorner<3, 1>() = -s.pose.rotation.transpose() * s.pose.translation;
  std::size_t n = 0;
  for (int v = 0; v < q.intrinsics.height; ++v)
    for (int u = 0; u < q.intrinsics.width; ++u) {
      const double z = q.depth.at(u, v);
      if (z <= 0) continue;
      const Eigen::Vector4d pc(z * (u + 0.5 - q.intrinsics.cx) / q.intrinsics.fx,
                               z * (v + 0.5 - q.intrinsics.cy) / q.intrinsics.fy, z, 1.0);
      const Eigen::Vector4d ps = Ts * (Tq * pc);
      if (ps.z() <= 1e-12) continue;
      const double x = s.intrinsics.fx * ps.x() / ps.z() + s.intrinsics.cx;
      const double y = s.intrinsics.fy * ps.y() / ps.z() + s.intrinsics.cy;
      if (x < 0 || y < 0 || x >= s.intrinsics.width || y >= s.intrinsics.height) continue;
      const double d = s.depth.at(int(x), int(y));
      if (d > 0 && std::abs(d - ps.z()) <= tol) ++n;
    }
  return n;
}

}  // namespace

TEST_CASE("generate_scene is deterministic and well formed") {
  CHECK(generate_scene(4) == generate_scene(4));
  CHECK(generate_scene(4).boxes != generate_scene(5).boxes);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto s = generate_scene(seed);
    for (int k = 0; k < 3; ++k) {
      CHECK(s.room_hi[k] - s.room_lo[k] >= 3.0);
      CHECK(s.room_hi[k] - s.room_lo[k] <= 5.0);
    }
    CHECK(s.boxes.size() >= 2);
    CHECK(s.boxes.size() <= 6);
    for (const auto& b : s.boxes)
      for (int k = 0; k < 3; ++k) {
        CHECK(b.lo[k] > s.room_lo[k]);
        CHECK(b.hi[k] < s.room_hi[k]);
        CHECK(b.hi[k] - b.lo[k] >= 0.3);
        CHECK(b.hi[k] - b.lo[k] <= 1.2);
      }
  }
  SceneOptions solid;
  solid.checker = false;
  for (const auto& b : generate_scene(9, solid).boxes) CHECK(b.texture.period == 0.0);
}

TEST_CASE("raycast hits a wall at the expected depth") {
  const auto s = empty_room(Vec3(4, 4, 3));
  const CameraIntrinsics K{5, 5, 2.5, 2.5, 5, 5};
  const auto f = raycast_gt(s, K, Pose::look_at(Vec3(2, 2, 1.5), Vec3(3, 2, 1.5)));
  CHECK(f.depth.at(2, 2) == 2.0);
  for (double d : f.depth.data()) CHECK(d > 0.0);
  CHECK_THROWS_AS(raycast_gt(s, K, Pose::look_at(Vec3(5, 2, 1.5), Vec3(6, 2, 1.5))), PreconditionError);
  auto with_box = s;
  with_box.boxes.push_back({Vec3(1, 1, 0.5), Vec3(2, 2, 1.5), {}});
  CHECK_THROWS_AS(raycast_gt(with_box, K, Pose::look_at(Vec3(1.5, 1.5, 1), Vec3(3, 2, 1))), PreconditionError);
}

TEST_CASE("raycast points lie on scene surfaces") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = generate_scene(seed);
    const auto frames = sweep_frames(s, 1, 4, seed);
    for (const auto& f : frames) {
      const auto cloud = back_project(f);
      CHECK(cloud.size() == f.depth.pixel_count());
      std::size_t off = 0;
      for (const auto& p : cloud.positions) off += !on_surface(s, p, 1e-6);
      CHECK(off == 0);
    }
  }
}

TEST_CASE("gt occupancy closed-form shell counts") {
  const double vs = 0.1;
  auto shell = [](long a, long b, long c) { return (a + 2) * (b + 2) * (c + 2) - (a - 2) * (b - 2) * (c - 2); };
  auto s = empty_room(Vec3(3.0, 2.0, 2.5));
  const auto room = gt_occupancy(s, vs, Vec3::Zero());
  CHECK(room.size() == shell(30, 20, 25));
  s.boxes.push_back({Vec3(0.5, 0.6, 0.7), Vec3(1.2, 1.0, 1.3), {}});
  const auto both = gt_occupancy(s, vs, Vec3::Zero());
  CHECK(both.size() == shell(30, 20, 25) + shell(7, 4, 6));
  // off-lattice planes give single-layer walls
  const auto shifted = gt_occupancy(empty_room(Vec3(3.0, 2.0, 2.5)), vs, Vec3(-0.05, -0.05, -0.05));
  CHECK(shifted.size() == 31 * 21 * 26 - 29 * 19 * 24);
}

TEST_CASE("gt occupancy scales with surface area") {
  const auto s = generate_scene(12);
  const Vec3 o(-0.013, -0.027, -0.041);
  const double coarse = gt_occupancy(s, 0.2, o).size();
  const double fine = gt_occupancy(s, 0.1, o).size();
  CHECK(fine / coarse > 2.0);
  CHECK(fine / coarse < 8.0);
}

TEST_CASE("fused observations fall inside gt occupancy") {
  const auto s = generate_scene(21);
  const auto frames = sweep_frames(s, 1, 6, 3);
  const auto cloud = fuse_frames(frames);
  for (const Vec3 origin : {Vec3(0, 0, 0), Vec3(-0.05, -0.05, -0.05)}) {
    const auto gt = gt_occupancy(s, 0.1, origin);
    const auto [obs, feats] = sg::voxelize(cloud, 0.1, origin);
    std::size_t missing = 0;
    for (const auto& c : obs.coords->coords()) missing += !gt.coords->contains(c);
    CHECK(missing == 0);
  }
}

TEST_CASE("view overlap") {
  const auto s = generate_scene(30);
  const auto frames = sweep_frames(s, 2, 8, 5);
  for (const auto& f : frames) CHECK(view_overlap(f, f) == 1.0);

  const auto room = empty_room(Vec3(4, 4, 3));
  const auto K = default_intrinsics();
  const auto a = raycast_gt(room, K, Pose::look_at(Vec3(0.3, 2, 1.5), Vec3(-1, 2, 1.5)));
  const auto b = raycast_gt(room, K, Pose::look_at(Vec3(3.7, 2, 1.5), Vec3(5, 2, 1.5)));
  CHECK(view_overlap(a, b) == 0.0);
  CHECK(view_overlap(b, a) == 0.0);

  std::size_t checked = 0;
  for (std::size_t i = 0; i < frames.size(); ++i)
    for (std::size_t j = 0; j < frames.size(); ++j) {
      const double v = view_overlap(frames[i], frames[j]);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(overlap_mask(frames[i], frames[j]).count() == overlap_oracle(frames[i], frames[j], 0.10));
      ++checked;
    }
  CHECK(checked == frames.size() * frames.size());

  RgbdFrame blank = a;
  for (auto& d : blank.depth.data()) d = 0.0;
  CHECK_THROWS_AS(view_overlap(blank, a), PreconditionError);
}

TEST_CASE("triplet selection rules") {
  const auto s = generate_scene(30);
  const auto frames = sweep_frames(s, 2, 16, 5);
  const auto triplets = select_triplets(frames);
  MESSAGE("triplets found: " << triplets.size());
  REQUIRE(!triplets.empty());
  for (const auto& t : triplets) {
    CHECK(t.source1 < t.source2);
    CHECK(view_overlap(frames[t.source1], frames[t.source2]) <= 0.01);
    CHECK(view_overlap(frames[t.source2], frames[t.source1]) <= 0.01);
    CHECK(view_overlap(frames[t.query], frames[t.source1]) < 0.5);
    CHECK(view_overlap(frames[t.query], frames[t.source2]) < 0.5);
    // union recomputed pixel by pixel
    const Mask m1 = overlap_mask(frames[t.query], frames[t.source1]);
    const Mask m2 = overlap_mask(frames[t.query], frames[t.source2]);
    std::size_t both = 0, unobs = 0;
    for (std::size_t i = 0; i < m1.bits.size(); ++i) {
      both += m1.bits[i] || m2.bits[i];
      unobs += t.unobserved.bits[i] != 0;
      CHECK((t.unobserved.bits[i] != 0) == !(m1.bits[i] || m2.bits[i]));
    }
    const double u = double(both) / m1.bits.size();
    CHECK(u >= 0.65);
    CHECK(u <= 0.70);
    CHECK(unobs + both == m1.bits.size());
  }

  // loosening the single-source cap admits sources the default rejects
  TripletBounds loose;
  loose.max_single = 1.0;
  std::size_t extra = 0;
  for (const auto& t : select_triplets(frames, loose)) extra += t.overlap1 >= 0.5 || t.overlap2 >= 0.5;
  CHECK(extra > 0);

  // identical sources overlap fully and fail the disjointness rule
  std::vector<RgbdFrame> dup = {frames[triplets[0].query], frames[triplets[0].source1], frames[triplets[0].source1]};
  TripletBounds any;
  any.min_union = 0.0;
  any.max_union = 1.0;
  for (const auto& t : select_triplets(dup, any)) CHECK(t.query == 0);
  CHECK(select_triplets(dup, any).empty());

  // order invariance
  std::vector<std::size_t> perm(frames.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(99);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<RgbdFrame> shuffled;
  for (auto p : perm) shuffled.push_back(frames[p]);
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>;
  std::set<Key> a, b;
  for (const auto& t : triplets) a.insert({t.query, t.source1, t.source2});
  for (const auto& t : select_triplets(shuffled)) {
    const auto s1 = perm[t.source1], s2 = perm[t.source2];
    b.insert({perm[t.query], std::min(s1, s2), std::max(s1, s2)});
  }
  CHECK(a == b);
  CHECK_THROWS_AS(select_triplets(std::span(frames).first(2)), PreconditionError);
}

TEST_CASE("renderer depth agrees with the raycaster on a snapped scene") {
  SceneOptions opt;
  opt.snap = 0.05;
  opt.checker = false;
  const auto s = generate_scene(8, opt);
  const auto occ = solid_occupancy(s, 0.05, s.room_lo);
  std::mt19937_64 rng(2);
  CaptureConfig cc;
  cc.positions = 1;
  cc.headings = 3;
  const CameraIntrinsics K{40, 40, 32, 32, 64, 64};
  render::RenderConfig cfg;
  for (const auto& pose : capture_poses(s, cc, rng)) {
    const auto gt = raycast_gt(s, K, pose);
    const auto batch = render::pixel_rays(K, pose);
    double sq = 0;
    for (std::size_t r = 0; r < batch.rays.size(); ++r) {
      const auto smp = render::sample_ray(render::intersect_voxels(batch.rays[r], occ), cfg);
      std::vector<double> sigma(smp.size(), 1e6), w;
      double t_final = 0, num = 0, op = 0;
      render::composite_weights(sigma, smp.delta, cfg.early_stop, w, t_final);
      for (std::size_t i = 0; i < w.size(); ++i) {
        num += w[i] * smp.t[i];
        op += w[i];
      }
      const double e = batch.depth_scale[r] * num / std::max(op, 1e-8) - gt.depth.data()[r];
      sq += e * e;
    }
    const double rmse = std::sqrt(sq / batch.rays.size());
    MESSAGE("depth rmse " << rmse);
    CHECK(rmse < 2 * cfg.step_size);
  }
}

TEST_CASE("solid occupancy of a lattice box") {
  ProceduralScene s = empty_room(Vec3(1.0, 1.0, 1.0));
  s.boxes.push_back({Vec3(0.2, 0.3, 0.4), Vec3(0.5, 0.5, 0.6), {}});
  const auto occ = solid_occupancy(s, 0.1, Vec3::Zero());
  // room: six 10x10 walls outside the room; box: 3x2x2 cells minus nothing interior
  CHECK(occ.size() == 6 * 100 + 12);
  CHECK(occ.coords->contains({-1, 0, 0}));
  CHECK(occ.coords->contains({10, 9, 9}));
  CHECK(occ.coords->contains({2, 3, 4}));
  CHECK_FALSE(occ.coords->contains({1, 3, 4}));
}
