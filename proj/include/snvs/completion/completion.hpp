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
#include "snvs/sparsegrid/sparsegrid.hpp"

namespace snvs::comp {

// ---- geometry ----

struct GeometryConfig {
  std::string prefix = "geo";
  int channels = 16;
  double tau = 0.5;
};

void init_geometry(ad::ParamStore& store, const GeometryConfig& cfg, std::mt19937_64& rng);

/// Candidate coordinates and occupancy logits of one decoder level.
struct GeometryLevel {
  sg::CoordSetPtr candidates;
  int stride = 1;
  ad::Var logits;  // candidates x 1
};

struct GeometryOutput {
  std::vector<GeometryLevel> levels;  // coarse to fine, last is stride 1
  sg::SparseVoxelSet completed;
};

/// Fine-level bounds (inclusive) generation may not leave: observed bbox padded by one voxel.
struct ClipBox {
  VoxelCoord lo;
  VoxelCoord hi;
  bool overlaps(const VoxelCoord& c, int stride) const;
};
ClipBox clip_box(const sg::SparseVoxelSet& observed);

/// Runs the net. With `gt`, pruning keeps predicted-or-true cells so every true cell stays a
/// candidate for the next level (teacher forcing).
GeometryOutput run_geometry(ad::Tape& tape, ad::ParamStore& store, const GeometryConfig& cfg,
                            const sg::SparseVoxelSet& observed, const sg::SparseVoxelSet* gt = nullptr);

/// Inference. The result always contains `observed`.
sg::SparseVoxelSet complete_geometry(const sg::SparseVoxelSet& observed, ad::ParamStore& store,
                                     const GeometryConfig& cfg = {});

/// Cell set coarsened `levels` times; a coarse cell is occupied iff any child is.
sg::CoordSetPtr coarsen_set(const sg::CoordSet& fine, int levels);

/// Sum over levels of the mean binary cross-entropy on that level's candidates.
ad::Var geometry_loss(const std::vector<GeometryLevel>& levels, const sg::SparseVoxelSet& gt);

/// Finest-level loss term alone, as a plain number.
double finest_bce(const GeometryOutput& out, const sg::SparseVoxelSet& gt);

// ---- texture ----

struct TextureConfig {
  std::string prefix = "tex";
  int channels = 32;  // embedding size d; input is d + 1
};

void init_texture(ad::ParamStore& store, const TextureConfig& cfg, std::mt19937_64& rng, bool zero = false);

/// Zero-padded embeddings on the completed vertex set and the inpainting mask (1 = new).
struct PaddedFeatures {
  sg::CoordSetPtr vertices;
  ad::Tensor features;
  std::vector<unsigned char> mask;

  std::int64_t masked_count() const;
};

PaddedFeatures pad_features(const sg::SparseFeatureGrid& observed, sg::CoordSetPtr completed_vertices);

/// Parameter-free lattice structure of the texture U-Net for a vertex set.
struct TexturePlan {
  sg::CoordSetPtr level[3];
  ad::IndexTablePtr conv[3];
  ad::IndexTablePtr down[2];  // level l -> l+1
  ad::IndexTablePtr up[2];    // level l+1 -> l
};
TexturePlan plan_texture(sg::CoordSetPtr vertices);

/// F~ = T(V~, F0, v); rows with mask 0 are copied from F0 bit for bit.
ad::Var inpaint_texture(ad::Tape& tape, ad::ParamStore& store, const TextureConfig& cfg, const TexturePlan& plan,
                        ad::Var padded, const std::vector<unsigned char>& mask);
ad::Tensor inpaint_texture(const PaddedFeatures& in, ad::ParamStore& store, const TextureConfig& cfg = {});

/// Mean over masked rows of the row-wise L1 distance; 0 when nothing is masked.
ad::Var texture_loss(ad::Var predicted, const ad::Tensor& target, const std::vector<unsigned char>& mask);

}  // namespace snvs::comp
