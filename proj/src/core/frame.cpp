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

#include "snvs/core/frame.hpp"

#include <cmath>

#include "snvs/error.hpp"

namespace snvs {

void RgbdFrame::validate() const {
  intrinsics.validate();
  pose.validate();
  SNVS_REQUIRE(rgb.channels() == 3 && depth.channels() == 1, "frame: rgb needs 3 channels, depth 1");
  SNVS_REQUIRE(rgb.width() == depth.width() && rgb.height() == depth.height(), "frame: rgb/depth size mismatch");
  SNVS_REQUIRE(rgb.width() == intrinsics.width && rgb.height() == intrinsics.height,
               "frame: image size differs from intrinsics");
  for (double v : rgb.data()) SNVS_REQUIRE(std::isfinite(v), "frame: non-finite rgb");
  for (double d : depth.data()) SNVS_REQUIRE(std::isfinite(d) && d >= 0.0, "frame: depth must be finite and >= 0");
}

void PointCloud::append(const PointCloud& other) {
  positions.insert(positions.end(), other.positions.begin(), other.positions.end());
  colors.insert(colors.end(), other.colors.begin(), other.colors.end());
}

PointCloud back_project(const RgbdFrame& frame) {
  const auto& K = frame.intrinsics;
  PointCloud cloud;
  for (int v = 0; v < frame.depth.height(); ++v) {
    for (int u = 0; u < frame.depth.width(); ++u) {
      const double z = frame.depth.at(u, v);
      if (!(z > 0.0)) continue;
      const Vec3 cam(z * (u + 0.5 - K.cx) / K.fx, z * (v + 0.5 - K.cy) / K.fy, z);
      cloud.positions.push_back(frame.pose.to_world(cam));
      cloud.colors.emplace_back(frame.rgb.at(u, v, 0), frame.rgb.at(u, v, 1), frame.rgb.at(u, v, 2));
    }
  }
  return cloud;
}

PointCloud fuse_frames(std::span<const RgbdFrame> frames) {
  SNVS_REQUIRE(!frames.empty(), "fuse_frames: need at least one frame");
  PointCloud cloud;
  for (const auto& f : frames) cloud.append(back_project(f));
  return cloud;
}

}  // namespace snvs
