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
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "snvs/core/frame.hpp"
#include "snvs/sparsegrid/sparsegrid.hpp"

namespace snvs::scenes {

/// Solid color when period is 0, otherwise a checker of two colors in the face plane.
struct Texture {
  Vec3 color_a = Vec3(0.5, 0.5, 0.5);
  Vec3 color_b = Vec3(0.5, 0.5, 0.5);
  double period = 0.0;

  /// Color at a point on a face whose normal is along `axis`.
  Vec3 at(const Vec3& p, int axis) const;
  bool operator==(const Texture&) const = default;
};

struct Box {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();
  Texture texture;

  bool contains(const Vec3& p, double margin = 0.0) const;
  bool operator==(const Box&) const = default;
};

/// Closed axis-aligned room seen from inside, z up, with free-standing boxes.
struct ProceduralScene {
  Vec3 room_lo = Vec3::Zero();
  Vec3 room_hi = Vec3(4, 4, 3);
  Texture floor, ceiling, walls;
  std::vector<Box> boxes;
  std::uint64_t seed = 0;

  /// Free space: strictly inside the room and outside every box (closed).
  bool is_free(const Vec3& p, double margin = 0.0) const;
  bool operator==(const ProceduralScene&) const = default;
};

struct SceneOptions {
  double min_side = 3.0;
  double max_side = 5.0;
  int min_boxes = 2;
  int max_boxes = 6;
  double min_box = 0.3;
  double max_box = 1.2;
  bool checker = true;  // false keeps every surface a solid color
  double snap = 0.0;     // > 0 rounds room sides and box corners to this grid
  std::optional<Vec3> room;  // fixed room size instead of a random one
};

/// Deterministic in (seed, options).
ProceduralScene generate_scene(std::uint64_t seed, const SceneOptions& options = {});

struct Hit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  int axis = 0;
  Vec3 color = Vec3::Zero();
};
/// Nearest surface hit of a ray starting in free space; nullopt only for rays leaving the room.
std::optional<Hit> cast_ray(const ProceduralScene& scene, const Ray& ray);

/// Exact RGB + z-depth frame. Throws PreconditionError when the camera is not in free space.
RgbdFrame raycast_gt(const ProceduralScene& scene, const CameraIntrinsics& intrinsics, const Pose& pose);

/// Voxels whose closed cell touches any scene surface (room walls and box faces).
sg::SparseVoxelSet gt_occupancy(const ProceduralScene& scene, double voxel_size, const Vec3& origin);

/// One layer of cells on the solid side of every surface: outside the room walls and inside boxes.
/// For a scene snapped to the lattice the union of these cells has exactly the scene's surfaces.
sg::SparseVoxelSet solid_occupancy(const ProceduralScene& scene, double voxel_size, const Vec3& origin);

/// True when p lies on some scene surface within tol.
bool on_surface(const ProceduralScene& scene, const Vec3& p, double tol = 1e-6);

inline constexpr double kOverlapDepthTolerance = 0.10;

/// Query pixels whose back-projected point lands inside the source image with matching source depth.
Mask overlap_mask(const RgbdFrame& query, const RgbdFrame& source, double tol = kOverlapDepthTolerance);
/// Fraction of valid-depth query pixels that are overlap-visible; throws when none are valid.
double view_overlap(const RgbdFrame& query, const RgbdFrame& source, double tol = kOverlapDepthTolerance);

struct TripletBounds {
  double pair_tolerance = 0.01;  // overlap between the two sources, both directions
  double max_single = 0.50;      // each source against the query, exclusive
  double min_union = 0.65;
  double max_union = 0.70;
};

struct Triplet {
  std::size_t source1 = 0;  // source1 < source2
  std::size_t source2 = 0;
  std::size_t query = 0;
  double overlap1 = 0.0;
  double overlap2 = 0.0;
  double union_overlap = 0.0;
  Mask unobserved;  // query pixels visible from neither source
};

/// All (s1, s2, q) satisfying the bounds, sorted by (query, source1, source2).
std::vector<Triplet> select_triplets(std::span<const RgbdFrame> frames, const TripletBounds& bounds = {});

struct CaptureConfig {
  int positions = 3;
  int headings = 16;        // evenly spaced yaw angles per position
  double min_height = 1.0;  // eye height range, clamped to the room
  double max_height = 1.6;
  double pitch = -0.15;     // radians, negative looks down
  double wall_margin = 0.5;
  double box_margin = 0.3;
};

/// Camera poses at random free positions, each sweeping a full turn. Deterministic in rng state.
std::vector<Pose> capture_poses(const ProceduralScene& scene, const CaptureConfig& cfg, std::mt19937_64& rng);

/// 64x64 pinhole with a 67 degree field of view.
CameraIntrinsics default_intrinsics();

}  // namespace snvs::scenes
