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

#include <span>
#include <vector>

#include "snvs/core/camera.hpp"
#include "snvs/core/image.hpp"

namespace snvs {

/// Posed color + z-depth observation. rgb has 3 channels in [0,1]; depth is meters, 0 = invalid.
struct RgbdFrame {
  Image rgb;
  Image depth;
  CameraIntrinsics intrinsics;
  Pose pose;

  void validate() const;
};

/// Colored points in world coordinates.
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  void append(const PointCloud& other);
};

/// Half-resolution render: rgb, z-depth, opacity and a d-channel aggregated feature per pixel.
struct FeatureImage {
  Image rgb;
  Image depth;
  Image opacity;
  Image feature;

  int width() const { return rgb.width(); }
  int height() const { return rgb.height(); }
};

/// One world point per valid-depth pixel, colored from the frame.
PointCloud back_project(const RgbdFrame& frame);

/// Concatenated back-projections of all frames; throws on an empty list.
PointCloud fuse_frames(std::span<const RgbdFrame> frames);

}  // namespace snvs
