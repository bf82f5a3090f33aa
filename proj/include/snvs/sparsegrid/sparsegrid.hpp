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

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "snvs/autodiff/ops.hpp"
#include "snvs/core/frame.hpp"
#include "snvs/core/voxel.hpp"

namespace snvs::sg {

/// Sorted, duplicate-free coordinate list with constant-time lookup (open addressing on key()).
class CoordSet {
 public:
  CoordSet() = default;
  /// Sorts and deduplicates.
  explicit CoordSet(std::vector<VoxelCoord> coords);

  const std::vector<VoxelCoord>& coords() const { return coords_; }
  std::int64_t size() const { return static_cast<std::int64_t>(coords_.size()); }
  bool empty() const { return coords_.empty(); }
  const VoxelCoord& operator[](std::int64_t i) const { return coords_[static_cast<std::size_t>(i)]; }
  /// Row of `c`, or -1.
  std::int32_t find(const VoxelCoord& c) const;
  bool contains(const VoxelCoord& c) const { return find(c) >= 0; }
  bool operator==(const CoordSet& o) const { return coords_ == o.coords_; }

 private:
  std::vector<VoxelCoord> coords_;
  std::vector<std::uint64_t> keys_;
  std::vector<std::int32_t> slots_;
  std::uint64_t mask_ = 0;
};

using CoordSetPtr = std::shared_ptr<const CoordSet>;

CoordSetPtr make_coords(std::vector<VoxelCoord> coords);

enum class LatticeKind { Voxel, Vertex };

/// Placement of a lattice in the world. Coordinates are in units of voxel_size * stride.
struct GridFrame {
  int stride = 1;
  double voxel_size = 0.1;
  Vec3 origin = Vec3::Zero();
  LatticeKind kind = LatticeKind::Voxel;

  double cell_size() const { return voxel_size * stride; }
  /// World position of lattice point `c` (a voxel's min corner, or a vertex).
  Vec3 corner(const VoxelCoord& c) const;
  Vec3 center(const VoxelCoord& c) const;
  GridFrame coarser() const;
  GridFrame finer() const;
};

struct SparseVoxelSet {
  CoordSetPtr coords = std::make_shared<CoordSet>();
  GridFrame frame;

  std::int64_t size() const { return coords->size(); }
  bool contains(const VoxelCoord& c) const { return coords->contains(c); }
};

struct SparseFeatureGrid {
  CoordSetPtr coords = std::make_shared<CoordSet>();
  GridFrame frame;
  ad::Tensor features;

  std::int64_t size() const { return coords->size(); }
  std::int64_t channels() const { return features.cols(); }
  /// Throws on a row-count mismatch or non-finite values.
  void validate() const;
  /// Feature row of `c`, or nullptr when absent.
  const double* find(const VoxelCoord& c) const;
};

/// Differentiable counterpart of SparseFeatureGrid: features live on a tape.
struct SparseTensor {
  CoordSetPtr coords;
  GridFrame frame;
  ad::Var features;

  std::int64_t size() const { return coords->size(); }
};

/// Weights of a size^3 kernel stored as (size^3 * cin) x cout, tap-major.
struct ConvKernel {
  int size = 3;
  int cin = 0;
  int cout = 0;
  ad::Tensor weights;
  ad::Tensor bias;

  ConvKernel() = default;
  ConvKernel(int size, int cin, int cout);
  int taps() const { return size * size * size; }
  /// Weight block of tap `k` (cin x cout, row-major).
  double* tap(int k) { return weights.data() + static_cast<std::int64_t>(k) * cin * cout; }
  void validate() const;
};

/// Tap order for kernel 3: (dx+1)*9 + (dy+1)*3 + (dz+1), d in {-1,0,1}.
VoxelCoord offset3(int tap);
/// Tap order for kernel 2: dx*4 + dy*2 + dz, d in {0,1}.
VoxelCoord offset2(int tap);
int tap2(const VoxelCoord& delta);

// Coordinate generators.
/// All lattice points within Chebyshev distance 1 of an input coordinate.
CoordSetPtr dilate(const CoordSet& in);
/// floor(c/2) of every input.
CoordSetPtr downsample(const CoordSet& in);
/// 2c + {0,1}^3 of every input.
CoordSetPtr subdivide(const CoordSet& in);
/// Lattice points of every voxel's 8 corners, sorted.
CoordSetPtr vertex_coords(const CoordSet& voxels);

// Rulebooks. Row r of the returned table lists, per tap, the input row feeding output r.
ad::IndexTablePtr conv3_table(const CoordSet& in, const CoordSet& out, int dilation = 1);
ad::IndexTablePtr down_table(const CoordSet& in, const CoordSet& out);
ad::IndexTablePtr up_table(const CoordSet& in, const CoordSet& out);

// Value-level operations.
std::pair<SparseVoxelSet, SparseFeatureGrid> voxelize(const PointCloud& cloud, double voxel_size, const Vec3& origin);
/// Corner lattice of a voxel set as a vertex-kind coordinate set.
std::vector<VoxelCoord> vertex_set(const SparseVoxelSet& voxels);
SparseFeatureGrid sparse_conv(const SparseFeatureGrid& grid, const ConvKernel& kernel, int stride_out, bool dilate);
SparseFeatureGrid generative_transposed_conv(const SparseFeatureGrid& grid, const ConvKernel& kernel);
/// Keeps rows with sigmoid(logit) > tau. `logits` has one entry per grid row.
SparseFeatureGrid prune(const SparseFeatureGrid& grid, std::span<const double> logits, double tau = 0.5);

// Differentiable operations. `bias` may be an invalid Var.
SparseTensor sparse_conv(const SparseTensor& x, ad::Var weight, ad::Var bias, int stride_out, bool dilate);
/// Convolution onto an explicit output coordinate set at the same stride.
SparseTensor conv_onto(const SparseTensor& x, ad::Var weight, ad::Var bias, CoordSetPtr out, int dilation = 1);
SparseTensor generative_transposed_conv(const SparseTensor& x, ad::Var weight, ad::Var bias);
/// Restriction to the rows flagged in `keep`.
SparseTensor select_rows(const SparseTensor& x, const std::vector<bool>& keep);
/// Features of `x` re-indexed onto `target` (same stride); absent coords get zero rows.
ad::Var align_to(const SparseTensor& x, const CoordSet& target);

/// Trilinear sample of a vertex grid. Corner order is tap2(delta).
struct CornerSample {
  VoxelCoord voxel;
  std::array<std::int32_t, 8> rows{};  // -1 when the vertex has no embedding
  std::array<double, 8> weights{};
  int missing = 0;
};

/// Locates the occupied voxel containing `p` (faces shared with empty voxels resolve to the
/// occupied side). Returns false when no occupied voxel contains `p`.
bool locate(const SparseVoxelSet& occupied, const Vec3& p, VoxelCoord& voxel);
/// Corner rows and trilinear weights of `p` inside `voxel` on the vertex set `vertices`.
CornerSample corner_sample(const CoordSet& vertices, const GridFrame& frame, const VoxelCoord& voxel, const Vec3& p);
/// Throws PreconditionError when `p` lies outside every occupied voxel.
CornerSample gather_corner_features(const SparseFeatureGrid& embeddings, const SparseVoxelSet& occupied, const Vec3& p);
/// Interpolated feature at a sample.
std::vector<double> interpolate(const SparseFeatureGrid& embeddings, const CornerSample& s);

}  // namespace snvs::sg
