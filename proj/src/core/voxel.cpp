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

#include "snvs/core/voxel.hpp"

#include <cmath>

#include "snvs/error.hpp"

namespace snvs {

VoxelCoord world_to_voxel(const Vec3& p, const Vec3& origin, double voxel_size) {
  SNVS_REQUIRE(voxel_size > 0.0, "world_to_voxel: voxel_size must be positive");
  if (!p.allFinite() || !origin.allFinite()) throw Error("world_to_voxel: non-finite input");
  const Vec3 q = (p - origin) / voxel_size;
  const double lim = VoxelCoord::kLimit;
  SNVS_REQUIRE(std::abs(q.x()) < lim && std::abs(q.y()) < lim && std::abs(q.z()) < lim,
               "world_to_voxel: coordinate outside lattice bounds");
  return {static_cast<std::int32_t>(std::floor(q.x())), static_cast<std::int32_t>(std::floor(q.y())),
          static_cast<std::int32_t>(std::floor(q.z()))};
}

Vec3 lattice_origin(const Vec3& min_corner, double voxel_size) {
  SNVS_REQUIRE(voxel_size > 0.0, "lattice_origin: voxel_size must be positive");
  Vec3 o;
  for (int a = 0; a < 3; ++a) o[a] = (std::floor(min_corner[a] / voxel_size) - 1.0) * voxel_size;
  return o;
}

}  // namespace snvs
