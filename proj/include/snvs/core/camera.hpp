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

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>

namespace snvs {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera model. Pixel centers sit at (u + 0.5, v + 0.5).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  /// Throws PreconditionError when focal lengths or the principal point are invalid.
  void validate() const;

  /// Intrinsics of the same camera at half resolution; requires even width and height.
  CameraIntrinsics half() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// World-from-camera rigid transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  /// Throws PreconditionError unless the rotation is orthonormal with det +1 (within 1e-6).
  void validate() const;
  bool is_valid(double tol = 1e-6) const;

  Vec3 to_world(const Vec3& p_cam) const { return rotation * p_cam + translation; }
  Vec3 to_camera(const Vec3& p_world) const { return rotation.transpose() * (p_world - translation); }

  /// Camera looking from `eye` towards `target`; camera y axis points along -`up` in the image.
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

  bool operator==(const Pose& o) const { return rotation == o.rotation && translation == o.translation; }
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

/// Ray through continuous image position (x, y) in pixel units.
Ray image_ray(const CameraIntrinsics& intrinsics, const Pose& pose, double x, double y);

/// Ray through the center of pixel (u, v).
Ray pixel_ray(const CameraIntrinsics& intrinsics, const Pose& pose, int u, int v);

/// Continuous image position and z-depth of a world point; empty when behind the camera.
struct Projection {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;
};
std::optional<Projection> project(const CameraIntrinsics& intrinsics, const Pose& pose, const Vec3& p_world);

/// Linear translation and slerp rotation; t in [0, 1].
Pose interpolate_pose(const Pose& a, const Pose& b, double t);

}  // namespace snvs
