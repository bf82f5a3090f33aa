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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "snvs/core/frame.hpp"
#include "snvs/scenes/scenes.hpp"

namespace snvs::io {

namespace fs = std::filesystem;

// PNG files. Errors raise IoError naming the path.

/// 8-bit RGB (gray, alpha and 16-bit inputs are converted); values in [0,1].
Image read_rgb_png(const fs::path& path);
/// Values are clamped to [0,1] and rounded to 8 bits.
void write_rgb_png(const fs::path& path, const Image& rgb);

/// 16-bit grayscale in millimeters, 0 = invalid; returned in meters.
Image read_depth_png(const fs::path& path);
/// Meters rounded to the nearest millimeter; depths beyond 65.535 m are rejected.
void write_depth_png(const fs::path& path, const Image& depth);

/// 8-bit grayscale, nonzero = set.
Mask read_mask_png(const fs::path& path);
void write_mask_png(const fs::path& path, const Mask& mask);

// Scene manifests (JSON). Paths inside are relative to the manifest's directory.

struct FrameRecord {
  std::string rgb;
  std::string depth;
  CameraIntrinsics intrinsics;
  Pose pose;
  bool operator==(const FrameRecord&) const = default;
};

struct SceneManifest {
  std::string scene_id;
  double voxel_size = 0.1;
  Vec3 origin = Vec3::Zero();
  std::vector<FrameRecord> frames;
  std::optional<scenes::ProceduralScene> scene;  // analytic description when generated
  bool operator==(const SceneManifest&) const = default;
};

std::string manifest_to_json(const SceneManifest& manifest);
/// Schema check; `where` prefixes error messages. Poses must be rigid with a 0 0 0 1 last row.
SceneManifest manifest_from_json(const std::string& text, const std::string& where = "manifest");

void write_manifest(const fs::path& path, const SceneManifest& manifest);
/// Parses and validates, and checks that every referenced image exists.
SceneManifest read_manifest(const fs::path& path);

struct LoadedScene {
  SceneManifest manifest;
  std::vector<RgbdFrame> frames;
  fs::path dir;
};

/// Manifest plus decoded frames; image sizes must match the intrinsics.
LoadedScene load_scene(const fs::path& manifest_path);

// Triplet lists (JSON).

struct TripletRecord {
  std::string scene;  // manifest path relative to the list file
  std::size_t source1 = 0;
  std::size_t source2 = 0;
  std::size_t query = 0;
  double overlap1 = 0.0;
  double overlap2 = 0.0;
  double union_overlap = 0.0;
  std::string mask;  // unobserved-region mask relative to the list file
  bool operator==(const TripletRecord&) const = default;
};

struct TripletList {
  scenes::TripletBounds bounds;
  std::vector<TripletRecord> triplets;
};

void write_triplets(const fs::path& path, const TripletList& list);
TripletList read_triplets(const fs::path& path);

}  // namespace snvs::io
