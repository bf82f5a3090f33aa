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

#include "snvs/core/camera.hpp"

#include <cmath>

#include "snvs/error.hpp"

namespace snvs {

void CameraIntrinsics::validate() const {
  SNVS_REQUIRE(fx > 0 && fy > 0, "intrinsics: focal lengths must be positive");
  SNVS_REQUIRE(width > 0 && height > 0, "intrinsics: width and height must be positive");
  SNVS_REQUIRE(cx > 0 && cx < width && cy > 0 && cy < height, "intrinsics: principal point outside image");
}

CameraIntrinsics CameraIntrinsics::half() const {
  SNVS_REQUIRE(width % 2 == 0 && height % 2 == 0, "intrinsics: width and height must be even");
  return {fx / 2, fy / 2, cx / 2, cy / 2, width / 2, height / 2};
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

void Pose::validate() const {
  SNVS_REQUIRE(is_valid(), "pose: rotation must be orthonormal with determinant +1");
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  SNVS_REQUIRE(right.norm() > 1e-9, "look_at: forward is parallel to up");
  right.normalize();
  const Vec3 down = forward.cross(right);
  Pose pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.translation = eye;
  return pose;
}

Ray image_ray(const CameraIntrinsics& intrinsics, const Pose& pose, double x, double y) {
  const Vec3 cam((x - intrinsics.cx) / intrinsics.fx, (y - intrinsics.cy) / intrinsics.fy, 1.0);
  return {pose.translation, (pose.rotation * cam).normalized()};
}

Ray pixel_ray(const CameraIntrinsics& intrinsics, const Pose& pose, int u, int v) {
  SNVS_REQUIRE(u >= 0 && u < intrinsics.width && v >= 0 && v < intrinsics.height, "pixel_ray: pixel out of bounds");
  return image_ray(intrinsics, pose, u + 0.5, v + 0.5);
}

std::optional<Projection> project(const CameraIntrinsics& intrinsics, const Pose& pose, const Vec3& p_world) {
  const Vec3 c = pose.to_camera(p_world);
  if (!(c.z() > 1e-12)) return std::nullopt;
  return Projection{intrinsics.fx * c.x() / c.z() + intrinsics.cx, intrinsics.fy * c.y() / c.z() + intrinsics.cy,
                    c.z()};
}

Pose interpolate_pose(const Pose& a, const Pose& b, double t) {
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  const Eigen::Quaterniond qa(a.rotation);
  const Eigen::Quaterniond qb(b.rotation);
  Pose out;
  out.rotation = qa.slerp(t, qb).normalized().toRotationMatrix();
  out.translation = (1.0 - t) * a.translation + t * b.translation;
  return out;
}

}  // namespace snvs
