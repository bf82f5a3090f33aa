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

#include "snvs/scenes/scenes.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "snvs/error.hpp"

namespace snvs::scenes {

namespace {

// Raw-bit uniforms so scene files do not depend on the standard library's distributions.
double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

const std::array<Vec3, 10> kPalette = {
    Vec3(0.85, 0.80, 0.70), Vec3(0.60, 0.45, 0.30), Vec3(0.25, 0.35, 0.55), Vec3(0.70, 0.20, 0.20),
    Vec3(0.20, 0.55, 0.30), Vec3(0.90, 0.75, 0.25), Vec3(0.35, 0.35, 0.35), Vec3(0.55, 0.70, 0.80),
    Vec3(0.45, 0.25, 0.50), Vec3(0.95, 0.95, 0.92)};

Texture random_texture(std::mt19937_64& rng, bool checker) {
  Texture t;
  const int a = uniform_int(rng, 0, kPalette.size() - 1);
  int b = uniform_int(rng, 0, kPalette.size() - 2);
  if (b >= a) ++b;
  t.color_a = kPalette[a];
  t.color_b = kPalette[b];
  const bool use_checker = rng() & 1;  // drawn either way to keep the stream aligned
  const double period = std::array{0.2, 0.3, 0.5}[uniform_int(rng, 0, 2)];
  if (checker && use_checker) {
    t.period = period;
  } else {
    t.color_b = t.color_a;
  }
  return t;
}

bool boxes_clear(const Box& a, const Box& b, double gap) {
  for (int k = 0; k < 3; ++k)
    if (a.hi[k] + gap <= b.lo[k] || b.hi[k] + gap <= a.lo[k]) return true;
  return false;
}

// Entry distance into a box along a ray, with the axis of the entered face.
std::optional<std::pair<double, int>> box_entry(const Box& box, const Ray& ray) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = 0;
  for (int k = 0; k < 3; ++k) {
    const double o = ray.origin[k], d = ray.direction[k];
    if (d == 0.0) {
      if (o < box.lo[k] || o > box.hi[k]) return std::nullopt;
      continue;
    }
    double t0 = (box.lo[k] - o) / d, t1 = (box.hi[k] - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      axis = k;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || !(t_near > 0.0)) return std::nullopt;
  return std::pair{t_near, axis};
}

}  // namespace

Vec3 Texture::at(const Vec3& p, int axis) const {
  if (period <= 0.0) return color_a;
  const int u = (axis + 1) % 3, v = (axis + 2) % 3;
  const auto cu = static_cast<long long>(std::floor(p[u] / period));
  const auto cv = static_cast<long long>(std::floor(p[v] / period));
  return ((cu + cv) & 1) ? color_b : color_a;
}

bool Box::contains(const Vec3& p, double margin) const {
  for (int k = 0; k < 3; ++k)
    if (p[k] < lo[k] - margin || p[k] > hi[k] + margin) return false;
  return true;
}

bool ProceduralScene::is_free(const Vec3& p, double margin) const {
  for (int k = 0; k < 3; ++k)
    if (!(p[k] > room_lo[k] + margin && p[k] < room_hi[k] - margin)) return false;
  return std::none_of(boxes.begin(), boxes.end(), [&](const Box& b) { return b.contains(p, margin); });
}

ProceduralScene generate_scene(std::uint64_t seed, const SceneOptions& o) {
  SNVS_REQUIRE(o.min_side > 0 && o.max_side >= o.min_side, "generate_scene: bad room size range");
  SNVS_REQUIRE(o.min_boxes >= 0 && o.max_boxes >= o.min_boxes, "generate_scene: bad box count range");
  SNVS_REQUIRE(o.min_box > 0 && o.max_box >= o.min_box && o.max_box + 0.2 < o.min_side,
               "generate_scene: boxes must fit inside the room");
  std::mt19937_64 rng(seed);
  ProceduralScene s;
  s.seed = seed;
  s.room_lo = Vec3::Zero();
  for (int k = 0; k < 3; ++k) s.room_hi[k] = uniform(rng, o.min_side, o.max_side);
  if (o.room) {
    SNVS_REQUIRE(o.room->minCoeff() > o.max_box + 0.2, "generate_scene: fixed room too small for the boxes");
    s.room_hi = *o.room;
  }
  s.floor = random_texture(rng, o.checker);
  s.ceiling = random_texture(rng, o.checker);
  s.walls = random_texture(rng, o.checker);

  SNVS_REQUIRE(o.snap >= 0.0, "generate_scene: snap must be non-negative");
  auto snapped = [&](double v) { return o.snap > 0 ? std::round(v / o.snap) * o.snap : v; };
  for (int k = 0; k < 3; ++k) s.room_hi[k] = snapped(s.room_hi[k]);

  const int count = uniform_int(rng, o.min_boxes, o.max_boxes);
  constexpr double kGap = 0.1;
  for (int n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Box b;
      for (int k = 0; k < 3; ++k) {
        const double size = uniform(rng, o.min_box, o.max_box);
        // boxes float a little above the floor so they stay strictly inside the room
        const double lo_min = s.room_lo[k] + kGap;
        const double lo_max = k == 2 ? std::min(0.5, s.room_hi[k] - kGap - size) : s.room_hi[k] - kGap - size;
        b.lo[k] = uniform(rng, lo_min, std::max(lo_min, lo_max));
        b.hi[k] = b.lo[k] + size;
        if (o.snap > 0) {
          b.lo[k] = std::max(snapped(b.lo[k]), s.room_lo[k] + o.snap);
          b.hi[k] = std::min(std::max(snapped(b.hi[k]), b.lo[k] + o.snap), s.room_hi[k] - o.snap);
        }
      }
      b.texture = random_texture(rng, o.checker);
      const bool clear =
          std::all_of(s.boxes.begin(), s.boxes.end(), [&](const Box& other) { return boxes_clear(b, other, kGap); });
      if (clear) {
        s.boxes.push_back(b);
        break;
      }
    }
  }
  return s;
}

std::optional<Hit> cast_ray(const ProceduralScene& scene, const Ray& ray) {
  Hit best;
  best.t = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    const double d = ray.direction[k];
    if (d == 0.0) continue;
    const double t = ((d > 0 ? scene.room_hi[k] : scene.room_lo[k]) - ray.origin[k]) / d;
    if (t > 0.0 && t < best.t) {
      best.t = t;
      best.axis = k;
    }
  }
  if (!std::isfinite(best.t)) return std::nullopt;
  const Texture* tex = nullptr;
  double plane = 0.0;
  {
    const bool up = ray.direction[best.axis] > 0;
    plane = up ? scene.room_hi[best.axis] : scene.room_lo[best.axis];
    tex = best.axis != 2 ? &scene.walls : (up ? &scene.ceiling : &scene.floor);
  }
  for (const auto& box : scene.boxes) {
    const auto e = box_entry(box, ray);
    if (e && e->first < best.t) {
      best.t = e->first;
      best.axis = e->second;
      plane = ray.direction[best.axis] > 0 ? box.lo[best.axis] : box.hi[best.axis];
      tex = &box.texture;
    }
  }
  best.point = ray.origin + best.t * ray.direction;
  best.point[best.axis] = plane;
  best.color = tex->at(best.point, best.axis);
  return best;
}

RgbdFrame raycast_gt(const ProceduralScene& scene, const CameraIntrinsics& K, const Pose& pose) {
  K.validate();
  pose.validate();
  SNVS_REQUIRE(scene.is_free(pose.translation), "raycast_gt: camera is inside solid geometry or outside the room");
  RgbdFrame f{Image(K.width, K.height, 3), Image(K.width, K.height, 1), K, pose};
  const Vec3 forward = pose.rotation.col(2);
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const Ray ray = pixel_ray(K, pose, u, v);
      const auto hit = cast_ray(scene, ray);
      if (!hit) continue;
      f.depth.at(u, v) = hit->t * ray.direction.dot(forward);
      for (int c = 0; c < 3; ++c) f.rgb.at(u, v, c) = hit->color[c];
    }
  }
  return f;
}

bool on_surface(const ProceduralScene& scene, const Vec3& p, double tol) {
  auto on_box_shell = [&](const Vec3& lo, const Vec3& hi) {
    for (int k = 0; k < 3; ++k)
      if (p[k] < lo[k] - tol || p[k] > hi[k] + tol) return false;
    for (int k = 0; k < 3; ++k)
      if (std::abs(p[k] - lo[k]) <= tol || std::abs(p[k] - hi[k]) <= tol) return true;
    return false;
  };
  if (on_box_shell(scene.room_lo, scene.room_hi)) return true;
  return std::any_of(scene.boxes.begin(), scene.boxes.end(),
                     [&](const Box& b) { return on_box_shell(b.lo, b.hi); });
}

sg::SparseVoxelSet gt_occupancy(const ProceduralScene& scene, double voxel_size, const Vec3& origin) {
  SNVS_REQUIRE(voxel_size > 0.0 && std::isfinite(voxel_size), "gt_occupancy: voxel size must be positive");
  constexpr double kEps = 1e-9;
  std::vector<VoxelCoord> out;
  // cells whose closed extent meets [a - eps, b + eps] along one axis
  auto range = [&](double a, double b, int k) {
    const double lo = std::ceil((a - kEps - origin[k]) / voxel_size - 1.0);
    const double hi = std::floor((b + kEps - origin[k]) / voxel_size);
    return std::pair{static_cast<std::int32_t>(lo), static_cast<std::int32_t>(hi)};
  };
  auto add_shell = [&](const Vec3& lo, const Vec3& hi) {
    for (int axis = 0; axis < 3; ++axis) {
      for (double plane : {lo[axis], hi[axis]}) {
        std::array<std::pair<std::int32_t, std::int32_t>, 3> r;
        for (int k = 0; k < 3; ++k) r[k] = k == axis ? range(plane, plane, k) : range(lo[k], hi[k], k);
        for (auto i = r[0].first; i <= r[0].second; ++i)
          for (auto j = r[1].first; j <= r[1].second; ++j)
            for (auto k = r[2].first; k <= r[2].second; ++k) out.push_back({i, j, k});
      }
    }
  };
  add_shell(scene.room_lo, scene.room_hi);
  for (const auto& b : scene.boxes) add_shell(b.lo, b.hi);
  sg::SparseVoxelSet set;
  set.coords = sg::make_coords(std::move(out));
  set.frame.voxel_size = voxel_size;
  set.frame.origin = origin;
  return set;
}

sg::SparseVoxelSet solid_occupancy(const ProceduralScene& scene, double voxel_size, const Vec3& origin) {
  SNVS_REQUIRE(voxel_size > 0.0 && std::isfinite(voxel_size), "solid_occupancy: voxel size must be positive");
  constexpr double kEps = 1e-9;
  std::vector<VoxelCoord> out;
  auto idx = [&](double v, int k) { return (v - origin[k]) / voxel_size; };
  // cells overlapping [a, b] with positive length
  auto span = [&](double a, double b, int k) {
    return std::pair{static_cast<std::int32_t>(std::floor(idx(a, k) + kEps)),
                     static_cast<std::int32_t>(std::ceil(idx(b, k) - kEps)) - 1};
  };
  // the cell containing the plane, or the one on the solid side when the plane is a lattice plane
  auto layer = [&](double plane, int k, bool solid_above) {
    const auto i = solid_above ? static_cast<std::int32_t>(std::floor(idx(plane, k) + kEps))
                               : static_cast<std::int32_t>(std::ceil(idx(plane, k) - kEps)) - 1;
    return std::pair{i, i};
  };
  auto add = [&](const Vec3& lo, const Vec3& hi, bool room) {
    for (int axis = 0; axis < 3; ++axis) {
      for (int side = 0; side < 2; ++side) {
        const double plane = side ? hi[axis] : lo[axis];
        // room walls are solid beyond the room, box faces are solid towards the box interior
        const bool solid_above = room ? side == 1 : side == 0;
        std::array<std::pair<std::int32_t, std::int32_t>, 3> r;
        for (int k = 0; k < 3; ++k) r[k] = k == axis ? layer(plane, k, solid_above) : span(lo[k], hi[k], k);
        for (auto i = r[0].first; i <= r[0].second; ++i)
          for (auto j = r[1].first; j <= r[1].second; ++j)
            for (auto k = r[2].first; k <= r[2].second; ++k) out.push_back({i, j, k});
      }
    }
  };
  add(scene.room_lo, scene.room_hi, true);
  for (const auto& b : scene.boxes) add(b.lo, b.hi, false);
  sg::SparseVoxelSet set;
  set.coords = sg::make_coords(std::move(out));
  set.frame.voxel_size = voxel_size;
  set.frame.origin = origin;
  return set;
}

Mask overlap_mask(const RgbdFrame& query, const RgbdFrame& source, double tol) {
  const auto& K = query.intrinsics;
  const auto& S = source.intrinsics;
  SNVS_REQUIRE(query.depth.width() == K.width && source.depth.width() == S.width, "overlap: frame size mismatch");
  Mask m(K.width, K.height);
  for (int v = 0; v < K.height; ++v) {
    for (int u = 0; u < K.width; ++u) {
      const double z = query.depth.at(u, v);
      if (!(z > 0.0)) continue;
      const Vec3 cam(z * (u + 0.5 - K.cx) / K.fx, z * (v + 0.5 - K.cy) / K.fy, z);
      const auto pr = project(S, source.pose, query.pose.to_world(cam));
      if (!pr || !(pr->x >= 0.0 && pr->x < S.width && pr->y >= 0.0 && pr->y < S.height)) continue;
      const double sd = source.depth.at(static_cast<int>(pr->x), static_cast<int>(pr->y));
      if (sd > 0.0 && std::abs(sd - pr->depth) <= tol) m.set(u, v, true);
    }
  }
  return m;
}

double view_overlap(const RgbdFrame& query, const RgbdFrame& source, double tol) {
  std::size_t valid = 0;
  for (double d : query.depth.data()) valid += d > 0.0;
  SNVS_REQUIRE(valid > 0, "view_overlap: query has no valid depth");
  return static_cast<double>(overlap_mask(query, source, tol).count()) / static_cast<double>(valid);
}

namespace {

using Bits = std::vector<std::uint64_t>;

Bits to_bits(const Mask& m) {
  Bits b((m.bits.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < m.bits.size(); ++i)
    if (m.bits[i]) b[i / 64] |= std::uint64_t{1} << (i % 64);
  return b;
}

std::size_t union_count(const Bits& a, const Bits& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += std::popcount(a[i] | b[i]);
  return n;
}

}  // namespace

std::vector<Triplet> select_triplets(std::span<const RgbdFrame> frames, const TripletBounds& bounds) {
  const std::size_t n = frames.size();
  SNVS_REQUIRE(n >= 3, "select_triplets: need at least three frames");
  std::vector<std::size_t> valid(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (double d : frames[i].depth.data()) valid[i] += d > 0.0;

  std::vector<std::vector<Bits>> bits(n, std::vector<Bits>(n));
  std::vector<std::vector<double>> ov(n, std::vector<double>(n, 0.0));
  for (std::size_t q = 0; q < n; ++q) {
    if (valid[q] == 0) continue;
    for (std::size_t s = 0; s < n; ++s) {
      if (s == q) continue;
      const Mask m = overlap_mask(frames[q], frames[s]);
      ov[q][s] = static_cast<double>(m.count()) / static_cast<double>(valid[q]);
      bits[q][s] = to_bits(m);
    }
  }
  // a source without valid depth sees nothing, so it trivially does not overlap
  auto disjoint = [&](std::size_t a, std::size_t b) {
    return ov[a][b] <= bounds.pair_tolerance && ov[b][a] <= bounds.pair_tolerance;
  };

  std::vector<Triplet> out;
  for (std::size_t q = 0; q < n; ++q) {
    if (valid[q] == 0) continue;
    for (std::size_t s1 = 0; s1 < n; ++s1) {
      if (s1 == q || !(ov[q][s1] < bounds.max_single)) continue;
      for (std::size_t s2 = s1 + 1; s2 < n; ++s2) {
        if (s2 == q || !(ov[q][s2] < bounds.max_single) || !disjoint(s1, s2)) continue;
        const double u = static_cast<double>(union_count(bits[q][s1], bits[q][s2])) / static_cast<double>(valid[q]);
        if (u < bounds.min_union || u > bounds.max_union) continue;
        Triplet t{s1, s2, q, ov[q][s1], ov[q][s2], u, Mask(frames[q].depth.width(), frames[q].depth.height())};
        const auto& a = bits[q][s1];
        const auto& b = bits[q][s2];
        for (std::size_t i = 0; i < t.unobserved.bits.size(); ++i)
          t.unobserved.bits[i] = !(((a[i / 64] | b[i / 64]) >> (i % 64)) & 1);
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

std::vector<Pose> capture_poses(const ProceduralScene& scene, const CaptureConfig& cfg, std::mt19937_64& rng) {
  SNVS_REQUIRE(cfg.positions > 0 && cfg.headings > 0, "capture_poses: counts must be positive");
  std::vector<Pose> poses;
  const double z_hi = std::min(cfg.max_height, scene.room_hi.z() - 0.3);
  const double z_lo = std::min(cfg.min_height, z_hi);
  for (int p = 0; p < cfg.positions; ++p) {
    Vec3 eye;
    bool found = false;
    for (int attempt = 0; attempt < 1000 && !found; ++attempt) {
      eye = Vec3(uniform(rng, scene.room_lo.x() + cfg.wall_margin, scene.room_hi.x() - cfg.wall_margin),
                 uniform(rng, scene.room_lo.y() + cfg.wall_margin, scene.room_hi.y() - cfg.wall_margin),
                 uniform(rng, z_lo, z_hi));
      found = scene.is_free(eye, 0.0) &&
              std::none_of(scene.boxes.begin(), scene.boxes.end(),
                           [&](const Box& b) { return b.contains(eye, cfg.box_margin); });
    }
    SNVS_REQUIRE(found, "capture_poses: no free camera position found");
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    for (int h = 0; h < cfg.headings; ++h) {
      const double yaw = phase + 2.0 * std::numbers::pi * h / cfg.headings;
      const Vec3 dir(std::cos(yaw) * std::cos(cfg.pitch), std::sin(yaw) * std::cos(cfg.pitch), std::sin(cfg.pitch));
      poses.push_back(Pose::look_at(eye, eye + dir));
    }
  }
  return poses;
}

CameraIntrinsics default_intrinsics() { return {48.0, 48.0, 32.0, 32.0, 64, 64}; }

}  // namespace snvs::scenes
