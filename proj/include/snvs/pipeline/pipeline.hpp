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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snvs/autodiff/param_store.hpp"
#include "snvs/completion/completion.hpp"
#include "snvs/core/frame.hpp"
#include "snvs/encoder/encoder.hpp"
#include "snvs/refine2d/refine2d.hpp"
#include "snvs/renderer/renderer.hpp"

namespace snvs::pipe {

/// Ablation switches. The basic framework (B) has all three off.
struct Flags {
  bool encoder = true;       // E: learned point cloud encoder instead of color embeddings
  bool disentangled = true;  // D: separate alpha / rgb decoders
  bool refine = true;        // R: learned upsampler instead of bilinear

  /// Parses "B", "B+E", "E,D,R", "BEDR" and the like; unknown letters throw PreconditionError.
  static Flags parse(const std::string& text);
  static Flags basic() { return {false, false, false}; }
  /// "B", "B+E", "B+E+D", "B+E+D+R", or a non-lattice combination in the same notation.
  std::string name() const;
  bool operator==(const Flags&) const = default;
};

/// Voxel lattice shared by every stage of one scene.
struct Lattice {
  double voxel_size = 0.1;
  Vec3 origin = Vec3::Zero();
};

struct ModelConfig {
  enc::EncoderConfig encoder;
  comp::GeometryConfig geometry;
  comp::TextureConfig texture;
  render::DecoderConfig decoder;
  render::RenderConfig render;
  refine::UpsamplerConfig upsampler;
  refine::DiscriminatorConfig discriminator;

  /// Decoder config with the disentangled switch taken from `flags`.
  render::DecoderConfig decoder_for(const Flags& flags) const;
  /// Stable text form, hashed into checkpoints.
  std::string describe() const;
};

/// Registers every module's tensors in one store.
void init_model(ad::ParamStore& store, const ModelConfig& model, std::uint64_t seed);

struct TrainConfig {
  int phase = 1;
  int steps = 100;
  int rays = 1024;  // phase 1 ray batch
  double lr = 1e-3;
  double lr_final = 0.0;  // > 0: cosine decay from lr to lr_final over the run
  double beta2 = 0.999;   // Adam second-moment decay
  double lambda_rgb = 1.0;
  double lambda_depth = 0.1;
  double lambda_gan = 0.01;
  double lambda_full = 1.0;  // phase 4 L1 between refined output and full-resolution ground truth
  Flags flags;
  bool unfreeze_renderer = false;  // phase 4: also update the decoder MLPs
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;  // tab-separated, one line per step

  void validate() const;
  std::string describe() const;
  double lr_at(int step) const;
};

/// 64-bit FNV-1a of text.
std::uint64_t fnv1a(const std::string& text);

// ---- checkpoints ----

struct CheckpointMeta {
  int phase = 0;
  std::int64_t step = 0;
  std::uint64_t config_hash = 0;
  bool operator==(const CheckpointMeta&) const = default;
};

inline constexpr const char* kMetaPrefix = "__meta__";

/// Stores the meta record as frozen tensors under __meta__.
void write_meta(ad::ParamStore& store, const CheckpointMeta& meta);
/// nullopt when the store has no meta record.
std::optional<CheckpointMeta> read_meta(const ad::ParamStore& store);
void save_checkpoint(const ad::ParamStore& store, const std::filesystem::path& path);
ad::ParamStore load_checkpoint(const std::filesystem::path& path);

/// Zeroes Adam moments and the step counter so every phase starts from the same optimizer state.
void reset_optimizer(ad::ParamStore& store);
/// Makes exactly the tensors under `prefixes` trainable.
void set_trainable_prefixes(ad::ParamStore& store, std::span<const std::string> prefixes);

struct TrainStats {
  std::vector<double> losses;  // total loss per executed step
  int skipped = 0;             // batches skipped with a warning
};

// ---- phase 1: encoder + renderer on complete scenes ----

struct ViewSet {
  std::vector<RgbdFrame> frames;
  Lattice lattice;
};

/// Pixels never used for phase-1 ray sampling; one in eight, spread over the image.
bool held_out_pixel(int u, int v);

TrainStats train_phase1(ad::ParamStore& store, const ModelConfig& model, std::span<const ViewSet> scenes,
                        const TrainConfig& cfg);

struct ViewScores {
  double psnr = 0.0;      // held-out rays, all views
  double delta125 = 0.0;  // held-out rays with valid ground-truth depth
  double depth_rmse = 0.0;
};
ViewScores evaluate_views(ad::ParamStore& store, const ModelConfig& model, const ViewSet& scene, const Flags& flags);

// ---- phase 2: geometry completion ----

struct CompletionPair {
  sg::SparseVoxelSet observed;
  sg::SparseVoxelSet complete;
};

/// Voxelizes both clouds on the lattice; the complete set also keeps every observed cell.
CompletionPair make_completion_pair(const PointCloud& partial, const PointCloud& full, const Lattice& lattice);

TrainStats train_phase2(ad::ParamStore& store, const ModelConfig& model, std::span<const CompletionPair> pairs,
                        const TrainConfig& cfg);

/// |a and b| / |a or b| over cells inside `region` (all cells when null).
double occupancy_iou(const sg::SparseVoxelSet& a, const sg::SparseVoxelSet& b, const comp::ClipBox* region = nullptr);

// ---- phase 3: texture inpainting ----

struct TextureSample {
  comp::PaddedFeatures input;
  ad::Tensor target;  // rows aligned with input.vertices
  std::shared_ptr<const comp::TexturePlan> plan;
};

/// Embeddings of a cloud: the encoder with flags.encoder, color embeddings otherwise.
sg::SparseFeatureGrid embed_cloud(const PointCloud& cloud, const Lattice& lattice, ad::ParamStore& store,
                                  const ModelConfig& model, const Flags& flags);

/// F from the partial cloud padded onto the vertices of the full cloud, F_target from the full cloud.
TextureSample make_texture_sample(const PointCloud& partial, const PointCloud& full, const Lattice& lattice,
                                  ad::ParamStore& store, const ModelConfig& model, const Flags& flags);

/// Same, with F_target already embedded (shared by every sample of a scene).
TextureSample make_texture_sample(const PointCloud& partial, const sg::SparseFeatureGrid& target,
                                  const Lattice& lattice, ad::ParamStore& store, const ModelConfig& model,
                                  const Flags& flags);

TrainStats train_phase3(ad::ParamStore& store, const ModelConfig& model, std::span<const TextureSample> samples,
                        const TrainConfig& cfg);

/// Masked L1 of the current inpainting and of predicting zeros.
struct InpaintScores {
  double model = 0.0;
  double zero_baseline = 0.0;
};
InpaintScores evaluate_inpainting(ad::ParamStore& store, const ModelConfig& model,
                                  std::span<const TextureSample> samples);

// ---- phase 4 and inference ----

struct Triplet {
  RgbdFrame source1;
  RgbdFrame source2;
  RgbdFrame query;
  Lattice lattice;
};

/// Completed, inpainted 3D representation built from two source views.
struct SceneState {
  sg::SparseVoxelSet observed;
  sg::SparseVoxelSet completed;
  sg::SparseFeatureGrid embeddings;  // on the completed vertex set
};

/// Fuses, embeds, completes and inpaints. Throws PreconditionError on an empty fused cloud.
SceneState build_scene(const RgbdFrame& source1, const RgbdFrame& source2, const Lattice& lattice,
                       ad::ParamStore& store, const ModelConfig& model, const Flags& flags);

struct InferResult {
  Image rgb;  // full resolution
  FeatureImage coarse;
  sg::SparseVoxelSet completed;
};

/// Renders one view of a built scene at the resolution of `intrinsics`.
InferResult render_scene(const SceneState& state, const Pose& pose, const CameraIntrinsics& intrinsics,
                         ad::ParamStore& store, const ModelConfig& model, const Flags& flags);

InferResult infer(const RgbdFrame& source1, const RgbdFrame& source2, const Pose& query_pose,
                  const CameraIntrinsics& intrinsics, const Lattice& lattice, ad::ParamStore& store,
                  const ModelConfig& model, const Flags& flags);

/// One scene build, then one render per pose.
std::vector<InferResult> render_trajectory(const RgbdFrame& source1, const RgbdFrame& source2,
                                           std::span<const Pose> poses, const CameraIntrinsics& intrinsics,
                                           const Lattice& lattice, ad::ParamStore& store, const ModelConfig& model,
                                           const Flags& flags);

/// `count` poses from a to b inclusive (linear translation, slerp rotation); count >= 2.
std::vector<Pose> interpolate_trajectory(const Pose& a, const Pose& b, int count);

/// 2x2 box average for color.
Image downsample_rgb(const Image& rgb);
/// First valid depth of each 2x2 block in row-major order, 0 when none.
Image downsample_depth(const Image& depth);

TrainStats train_phase4(ad::ParamStore& store, const ModelConfig& model, std::span<const Triplet> triplets,
                        const TrainConfig& cfg);

}  // namespace snvs::pipe
