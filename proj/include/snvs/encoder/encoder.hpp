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

#include "snvs/autodiff/nn.hpp"
#include "snvs/sparsegrid/sparsegrid.hpp"

namespace snvs::enc {

/// Residual sparse network lifting per-vertex colors to d-channel embeddings.
struct EncoderConfig {
  std::string prefix = "enc";
  int channels = 32;
  int blocks = 4;
};

/// Registers encoder tensors. `zero_output` zeroes the final layer's weights so the output
/// equals its bias.
void init_encoder(ad::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng, bool zero_output = false);

/// Everything about a cloud the encoder needs that does not depend on parameters.
struct EncoderInput {
  sg::SparseVoxelSet voxels;
  sg::CoordSetPtr vertices;
  sg::GridFrame vertex_frame;
  /// Per vertex: point-weighted mean color over the up-to-8 incident occupied voxels.
  ad::Tensor vertex_colors;
  /// Shared 27-tap rulebook on the vertex lattice.
  ad::IndexTablePtr table;

  std::int64_t vertex_count() const { return vertices->size(); }
};

EncoderInput prepare_encoder_input(const PointCloud& cloud, double voxel_size, const Vec3& origin);

/// Differentiable forward pass; features are (M x channels) on the vertex lattice.
sg::SparseTensor encode(ad::Tape& tape, ad::ParamStore& store, const EncoderConfig& cfg, const EncoderInput& in);

/// Value-level convenience.
sg::SparseFeatureGrid encode(const PointCloud& cloud, double voxel_size, const Vec3& origin, ad::ParamStore& store,
                             const EncoderConfig& cfg = {});

/// Parameter-free substitute used by the basic ablation: vertex color, a constant occupancy
/// channel, zero padding up to `channels`.
ad::Tensor color_embedding(const EncoderInput& in, int channels);

}  // namespace snvs::enc
