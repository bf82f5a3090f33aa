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

#include <compare>
#include <cstdint>
#include <functional>

#include "snvs/core/camera.hpp"

namespace snvs {

/// Signed lattice coordinate. Ordering is lexicographic (i, j, k).
struct VoxelCoord {
  std::int32_t i = 0;
  std::int32_t j = 0;
  std::int32_t k = 0;

  static constexpr std::int32_t kLimit = 1 << 20;

  auto operator<=>(const VoxelCoord&) const = default;
  bool operator==(const VoxelCoord&) const = default;

  VoxelCoord operator+(const VoxelCoord& o) const { return {i + o.i, j + o.j, k + o.k}; }
  VoxelCoord operator-(const VoxelCoord& o) const { return {i - o.i, j - o.j, k - o.k}; }

  /// Packs into 63 bits; requires |component| < 2^20 + 2^20.
  std::uint64_t key() const {
    constexpr std::int64_t off = std::int64_t{1} << 20;
    return (static_cast<std::uint64_t>(i + off) << 42) | (static_cast<std::uint64_t>(j + off) << 21) |
           static_cast<std::uint64_t>(k + off);
  }
  bool in_bounds() const {
    return i > -kLimit && i < kLimit && j > -kLimit && j < kLimit && k > -kLimit && k < kLimit;
  }
};

/// floor of a/2 for signed a.
inline std::int32_t floor_div2(std::int32_t a) { return a >= 0 ? a / 2 : -((-a + 1) / 2); }

inline VoxelCoord coarsen(const VoxelCoord& c) { return {floor_div2(c.i), floor_div2(c.j), floor_div2(c.k)}; }

/// Componentwise floor((p - origin) / voxel_size). Throws on non-finite input or voxel_size <= 0.
VoxelCoord world_to_voxel(const Vec3& p, const Vec3& origin, double voxel_size);

/// Lattice origin for a point set: floor of the min corner to a voxel multiple, minus one voxel.
Vec3 lattice_origin(const Vec3& min_corner, double voxel_size);

}  // namespace snvs

template <>
struct std::hash<snvs::VoxelCoord> {
  std::size_t operator()(const snvs::VoxelCoord& c) const noexcept {
    std::uint64_t x = c.key();
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};
