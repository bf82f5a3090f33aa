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

namespace snvs::refine {

/// Image on a tape: one row per pixel (row-major), one column per channel.
struct ImageVar {
  ad::Var data;
  int width = 0;
  int height = 0;
};

ad::Tensor to_tensor(const Image& im);
Image to_image(const ad::Tensor& t, int width, int height);

/// 3x3 zero-padded convolution rulebook; output is ceil(w/stride) x ceil(h/stride).
ad::IndexTablePtr conv2d_table(int width, int height, int stride);
/// Fine pixel -> coarse pixel for a 2x nearest-neighbour upsample of a w x h image.
std::shared_ptr<std::vector<std::int32_t>> nearest2x_index(int width, int height);

/// 2x bilinear upsample (half-pixel centers, edge clamp) as constant 4-tap weights.
struct Bilinear2x {
  ad::IndexTablePtr table;
  std::shared_ptr<const std::vector<double>> weights;
};
Bilinear2x bilinear2x(int width, int height);
Image bilinear_upsample(const Image& im);

// ---- upsampler ----

struct UpsamplerConfig {
  std::string prefix = "ups";
  int input = 35;  // rgb + d
  int hidden = 32;
};

/// The residual output layer starts at zero unless `random_residual`.
void init_upsampler(ad::ParamStore& store, const UpsamplerConfig& cfg, std::mt19937_64& rng,
                    bool random_residual = false);

/// Coarse rgb and feature concatenated per pixel.
ad::Tensor coarse_input(const FeatureImage& coarse);

ImageVar upsample(ad::Tape& tape, ad::ParamStore& store, const UpsamplerConfig& cfg, const ImageVar& coarse);
Image upsample(const FeatureImage& coarse, ad::ParamStore& store, const UpsamplerConfig& cfg = {});

// ---- discriminator ----

struct DiscriminatorConfig {
  std::string prefix = "disc";
  std::vector<int> widths{16, 32, 32, 32, 32};
  std::vector<int> strides{2, 2, 2, 1, 1};
};

void init_discriminator(ad::ParamStore& store, const DiscriminatorConfig& cfg, std::mt19937_64& rng);

/// Patch logits, one row per output cell.
ad::Var discriminate(ad::Tape& tape, ad::ParamStore& store, const DiscriminatorConfig& cfg, const ImageVar& rgb);

/// Receptive field of one logit, in input pixels.
int receptive_field(const DiscriminatorConfig& cfg);

struct GanLosses {
  ad::Var discriminator;
  ad::Var generator;
};

/// Hinge losses. The fake image is detached inside the discriminator term.
GanLosses gan_losses(ad::Tape& tape, ad::ParamStore& store, const DiscriminatorConfig& cfg, const ImageVar& real,
                     const ImageVar& fake);
/// Same losses from precomputed logits.
GanLosses hinge_losses(ad::Var real_logits, ad::Var fake_logits_detached, ad::Var fake_logits);

}  // namespace snvs::refine
