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

#include <random>
#include <string>
#include <vector>

#include "snvs/autodiff/nn.hpp"
#include "snvs/core/frame.hpp"
#include "snvs/sparsegrid/sparsegrid.hpp"

namespace snvs::render {

struct RenderConfig {
  double step_size = 0.025;
  int max_samples = 256;
  double early_stop = 1e-3;  // stop once transmittance drops below this
  Vec3 background = Vec3::Zero();
  bool jitter = false;  // random sample placement inside each step (training only)

  void validate() const;
};

/// Occupied voxel crossed by a ray over [t_enter, t_exit], t_enter >= 0.
struct VoxelHit {
  VoxelCoord coord;
  double t_enter = 0.0;
  double t_exit = 0.0;
  bool operator==(const VoxelHit&) const = default;
};

/// Slab interval of a ray against the AABB of cell `c`; empty intervals have t_exit <= t_enter.
void slab_interval(const Ray& ray, const sg::GridFrame& frame, const VoxelCoord& c, double& t_enter, double& t_exit);

/// Occupied voxels hit with t_exit > max(t_enter, 0), clipped to t >= 0, sorted by entry then coordinate.
std::vector<VoxelHit> intersect_voxels(const Ray& ray, const sg::SparseVoxelSet& voxels);

struct RaySamples {
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<int> hit;  // index into the hit list
  std::size_t size() const { return t.size(); }
};

/// Uniform steps of step_size inside every interval, one sample at each step's midpoint
/// (or uniformly inside it with `rng`), at least one per interval, capped at max_samples.
RaySamples sample_ray(const std::vector<VoxelHit>& hits, const RenderConfig& cfg, std::mt19937_64* rng = nullptr);

// ---- decoders ----

struct DecoderConfig {
  std::string prefix = "dec";
  int embedding = 32;
  int alpha_dims = 8;  // disentangled split: [0, alpha_dims) -> density, rest -> color
  int hidden = 64;
  bool disentangled = true;
  bool view_dirs = true;
  int view_frequencies = 4;

  int view_dims() const { return view_dirs ? 6 * view_frequencies : 0; }
};

/// Registers both the disentangled and the shared-trunk decoders.
void init_decoders(ad::ParamStore& store, const DecoderConfig& cfg, std::mt19937_64& rng, bool zero = false);

/// sin/cos of 2^k * pi * d for k < frequencies, per component.
std::vector<double> encode_direction(const Vec3& d, int frequencies);

struct Decoded {
  ad::Var sigma;  // S x 1, >= 0
  ad::Var rgb;    // S x 3, in [0, 1]
};

Decoded decode(ad::Tape& tape, ad::ParamStore& store, const DecoderConfig& cfg, ad::Var embedding, ad::Var view);

// ---- compositing ----

/// Sample ranges per ray (offsets has rays + 1 entries) with per-sample t and delta.
struct CompositeLayout {
  std::vector<std::int64_t> offsets;
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<double> depth_scale;  // per ray, multiplies the expected t
  std::int64_t rays() const { return static_cast<std::int64_t>(offsets.size()) - 1; }
};

/// Output column layout of composite().
inline constexpr int kColRgb = 0;
inline constexpr int kColDepth = 3;
inline constexpr int kColOpacity = 4;
inline constexpr int kColFeature = 5;

/// Per-ray weights w_i = T_i * alpha_i (zero past early termination) and final transmittance.
void composite_weights(std::span<const double> sigma, std::span<const double> delta, double early_stop,
                       std::vector<double>& weights, double& t_final);

/// Rays x (5 + d): rgb, depth, opacity, feature. `feature` may be an invalid Var (d = 0).
ad::Var composite(const std::shared_ptr<const CompositeLayout>& layout, ad::Var sigma, ad::Var rgb, ad::Var feature,
                  const RenderConfig& cfg);

// ---- rendering ----

/// Rays plus the factor turning distance along each ray into camera z-depth.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<double> depth_scale;
};

/// One ray per pixel center, row-major.
RayBatch pixel_rays(const CameraIntrinsics& intrinsics, const Pose& pose);

/// Scene representation the renderer reads: occupied voxels plus vertex embeddings.
struct SceneRep {
  sg::SparseVoxelSet voxels;
  sg::CoordSetPtr vertices;
  ad::Var embeddings;  // vertices x d
};


/// Differentiable render of a ray batch: rays x (5 + d), see kCol*.
ad::Var render_rays(ad::Tape& tape, ad::ParamStore& store, const SceneRep& scene, const RayBatch& rays,
                    const DecoderConfig& dcfg, const RenderConfig& rcfg, std::mt19937_64* jitter = nullptr);

/// Half-resolution render at `pose`; `intrinsics` describe the full-resolution camera.
FeatureImage render_view(const sg::SparseFeatureGrid& embeddings, const sg::SparseVoxelSet& voxels, const Pose& pose,
                         const CameraIntrinsics& intrinsics, ad::ParamStore& store, const DecoderConfig& dcfg,
                         const RenderConfig& rcfg);

/// Unpacks a render_rays result laid out as a width x height image.
FeatureImage to_feature_image(const ad::Tensor& out, int width, int height);

}  // namespace snvs::render
