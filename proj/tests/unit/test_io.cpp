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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "snvs/error.hpp"
#include "snvs/io/io.hpp"

using namespace snvs;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("snvs_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

io::SceneManifest sample_manifest() {
  io::SceneManifest m;
  m.scene_id = "room";
  m.voxel_size = 0.1;
  m.origin = Vec3(-0.05, -0.05, -0.05);
  for (int i = 0; i < 2; ++i)
    m.frames.push_back({"rgb/" + std::to_string(i) + ".png", "depth/" + std::to_string(i) + ".png",
                        scenes::default_intrinsics(),
                        Pose::look_at(Vec3(1 + i, 1, 1.2), Vec3(3, 2.5 - i * 0.3, 1.0))});
  m.scene = scenes::generate_scene(11);
  return m;
}

void write_images(const fs::path& dir, const io::SceneManifest& m) {
  for (const auto& f : m.frames) {
    io::write_rgb_png(dir / f.rgb, Image(f.intrinsics.width, f.intrinsics.height, 3, 0.5));
    io::write_depth_png(dir / f.depth, Image(f.intrinsics.width, f.intrinsics.height, 1, 2.5));
  }
}

}  // namespace

TEST_CASE("png round trips") {
  const fs::path dir = scratch("png");
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> byte(0, 255), mm(0, 65535);
  Image rgb(7, 5, 3);
  for (auto& v : rgb.data()) v = byte(rng) / 255.0;
  io::write_rgb_png(dir / "c.png", rgb);
  const Image rgb2 = io::read_rgb_png(dir / "c.png");
  REQUIRE(rgb2.same_dims(rgb));
  for (std::size_t i = 0; i < rgb.data().size(); ++i) CHECK(std::lround(rgb2.data()[i] * 255) == std::lround(rgb.data()[i] * 255));

  Image depth(6, 4, 1);
  for (auto& v : depth.data()) v = mm(rng) / 1000.0;
  depth.at(0, 0) = 2.5;
  io::write_depth_png(dir / "d.png", depth);
  const Image d2 = io::read_depth_png(dir / "d.png");
  CHECK(d2.at(0, 0) == 2.5);
  for (std::size_t i = 0; i < depth.data().size(); ++i) CHECK(d2.data()[i] == doctest::Approx(depth.data()[i]).epsilon(1e-12));
  CHECK_THROWS_AS(io::write_depth_png(dir / "far.png", Image(2, 2, 1, 70.0)), PreconditionError);
  // an 8-bit image is not a depth map
  CHECK_THROWS_AS(io::read_depth_png(dir / "c.png"), IoError);

  Mask m(5, 3);
  m.set(1, 2, true);
  m.set(4, 0, true);
  io::write_mask_png(dir / "m.png", m);
  CHECK(io::read_mask_png(dir / "m.png") == m);

  CHECK_THROWS_AS(io::read_rgb_png(dir / "missing.png"), IoError);
  std::ofstream(dir / "junk.png") << "not a png";
  CHECK_THROWS_AS(io::read_rgb_png(dir / "junk.png"), IoError);
}

TEST_CASE("manifest round trip and validation") {
  const fs::path dir = scratch("manifest");
  const io::SceneManifest m = sample_manifest();
  write_images(dir, m);
  io::write_manifest(dir / "manifest.json", m);
  const io::SceneManifest back = io::read_manifest(dir / "manifest.json");
  CHECK(back == m);
  CHECK(io::manifest_to_json(back) == io::manifest_to_json(m));

  const io::LoadedScene s = io::load_scene(dir / "manifest.json");
  REQUIRE(s.frames.size() == 2);
  CHECK(s.frames[0].depth.at(3, 3) == 2.5);

  auto expect_error = [](const std::string& body, const std::string& needle) {
    try {
      io::manifest_from_json(body, "m");
      FAIL("accepted: " << needle);
    } catch (const IoError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  std::string body = io::manifest_to_json(m);
  auto replace = [&](const std::string& from, const std::string& to) {
    std::string b = body;
    const auto at = b.find(from);
    REQUIRE(at != std::string::npos);
    return b.replace(at, from.size(), to);
  };
  expect_error(replace("\"voxel_size\"", "\"voxel\""), "m.voxel_size");
  expect_error(replace("\"fx\"", "\"fq\""), "m.frames[0].intrinsics.fx");
  expect_error("{", "invalid JSON");

  // perturb a rotation entry
  io::SceneManifest bad = m;
  bad.frames[1].pose.rotation(0, 1) += 0.01;
  expect_error(io::manifest_to_json(bad), "m.frames[1].pose");

  fs::remove(dir / m.frames[1].depth);
  try {
    io::read_manifest(dir / "manifest.json");
    FAIL("missing file accepted");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("depth/1.png") != std::string::npos);
  }
}

TEST_CASE("triplet list round trip") {
  const fs::path dir = scratch("triplets");
  io::TripletList list;
  list.bounds.min_union = 0.6;
  list.triplets.push_back({"a/manifest.json", 0, 3, 2, 0.31, 0.4, 0.66, "masks/0.png"});
  io::write_triplets(dir / "t.json", list);
  const io::TripletList back = io::read_triplets(dir / "t.json");
  CHECK(back.bounds.min_union == 0.6);
  CHECK(back.triplets == list.triplets);
  list.triplets[0].query = 3;
  io::write_triplets(dir / "bad.json", list);
  CHECK_THROWS_AS(io::read_triplets(dir / "bad.json"), IoError);
}
