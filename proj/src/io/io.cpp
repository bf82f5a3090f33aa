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

#include "snvs/io/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <sstream>

#include "snvs/error.hpp"

namespace snvs::io {

namespace {

using nlohmann::json;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  // libpng expects no return; longjmp back into the caller's setjmp
  (void)msg;
  png_longjmp(png, 1);
}

struct Raw {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 3 rgb
  int depth = 8;     // 8 or 16
  std::vector<std::uint16_t> samples;
};

Raw read_png(const fs::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path.string());
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError(path.string() + ": not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError(path.string() + ": libpng initialization failed");
  }
  Raw raw;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path.string() + ": corrupt PNG data");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int bits = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bits < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * raw.height);
  rows.resize(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = buffer.data() + stride * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (raw.channels != 1 && raw.channels != 3) throw IoError(path.string() + ": unsupported channel layout");
  raw.samples.resize(static_cast<std::size_t>(raw.width) * raw.height * raw.channels);
  for (int y = 0; y < raw.height; ++y)
    for (int i = 0; i < raw.width * raw.channels; ++i) {
      const std::size_t k = static_cast<std::size_t>(y) * raw.width * raw.channels + i;
      if (raw.depth == 16) {
        raw.samples[k] = static_cast<std::uint16_t>(rows[y][2 * i] << 8 | rows[y][2 * i + 1]);
      } else {
        raw.samples[k] = rows[y][i];
      }
    }
  return raw;
}

void write_png(const fs::path& path, int width, int height, int channels, int depth,
               const std::vector<std::uint16_t>& samples) {
  SNVS_REQUIRE(width > 0 && height > 0, "write_png: empty image");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError(path.string() + ": libpng initialization failed");
  }
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (depth / 8);
  std::vector<unsigned char> buffer(stride * height);
  for (int y = 0; y < height; ++y)
    for (int i = 0; i < width * channels; ++i) {
      const std::uint16_t v = samples[static_cast<std::size_t>(y) * width * channels + i];
      unsigned char* p = buffer.data() + stride * y;
      if (depth == 16) {
        p[2 * i] = static_cast<unsigned char>(v >> 8);
        p[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
      } else {
        p[i] = static_cast<unsigned char>(v);
      }
    }
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + stride * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path.string() + ": PNG encoding failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// ---- json helpers; every error names the field ----

const json& field(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw IoError(where + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw IoError(where + "." + key + ": missing");
  return *it;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw IoError(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw IoError(where + ": not finite");
  return v;
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) throw IoError(where + ": expected a string");
  return j.get<std::string>();
}

std::size_t index(const json& j, const std::string& where) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    throw IoError(where + ": expected a non-negative integer");
  return j.get<std::size_t>();
}

int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw IoError(where + ": expected an integer");
  return j.get<int>();
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw IoError(where + ": expected 3 numbers");
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]"), number(j[2], where + "[2]")};
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const scenes::Texture& t) {
  return {{"color_a", to_json(t.color_a)}, {"color_b", to_json(t.color_b)}, {"period", t.period}};
}

scenes::Texture texture(const json& j, const std::string& where) {
  scenes::Texture t;
  t.color_a = vec3(field(j, "color_a", where), where + ".color_a");
  t.color_b = vec3(field(j, "color_b", where), where + ".color_b");
  t.period = number(field(j, "period", where), where + ".period");
  if (t.period < 0) throw IoError(where + ".period: must be non-negative");
  return t;
}

json to_json(const scenes::ProceduralScene& s) {
  json boxes = json::array();
  for (const auto& b : s.boxes) boxes.push_back({{"lo", to_json(b.lo)}, {"hi", to_json(b.hi)}, {"texture", to_json(b.texture)}});
  return {{"seed", s.seed},
          {"room_lo", to_json(s.room_lo)},
          {"room_hi", to_json(s.room_hi)},
          {"floor", to_json(s.floor)},
          {"ceiling", to_json(s.ceiling)},
          {"walls", to_json(s.walls)},
          {"boxes", boxes}};
}

scenes::ProceduralScene scene(const json& j, const std::string& where) {
  scenes::ProceduralScene s;
  const json& seed = field(j, "seed", where);
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0))
    throw IoError(where + ".seed: expected a non-negative integer");
  s.seed = seed.get<std::uint64_t>();
  s.room_lo = vec3(field(j, "room_lo", where), where + ".room_lo");
  s.room_hi = vec3(field(j, "room_hi", where), where + ".room_hi");
  if (!(s.room_hi.array() > s.room_lo.array()).all()) throw IoError(where + ".room_hi: must exceed room_lo");
  s.floor = texture(field(j, "floor", where), where + ".floor");
  s.ceiling = texture(field(j, "ceiling", where), where + ".ceiling");
  s.walls = texture(field(j, "walls", where), where + ".walls");
  const json& boxes = field(j, "boxes", where);
  if (!boxes.is_array()) throw IoError(where + ".boxes: expected an array");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const std::string w = where + ".boxes[" + std::to_string(i) + "]";
    scenes::Box b;
    b.lo = vec3(field(boxes[i], "lo", w), w + ".lo");
    b.hi = vec3(field(boxes[i], "hi", w), w + ".hi");
    if (!(b.hi.array() > b.lo.array()).all()) throw IoError(w + ".hi: must exceed lo");
    b.texture = texture(field(boxes[i], "texture", w), w + ".texture");
    s.boxes.push_back(b);
  }
  return s;
}

json parse(const std::string& body, const std::string& where) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw IoError(where + ": invalid JSON (" + e.what() + ")");
  }
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << body;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

Image read_rgb_png(const fs::path& path) {
  const Raw raw = read_png(path);
  const double scale = raw.depth == 16 ? 65535.0 : 255.0;
  Image img(raw.width, raw.height, 3);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src = raw.channels == 3 ? c : 0;
        img.at(x, y, c) = raw.samples[(static_cast<std::size_t>(y) * raw.width + x) * raw.channels + src] / scale;
      }
  return img;
}

void write_rgb_png(const fs::path& path, const Image& rgb) {
  SNVS_REQUIRE(rgb.channels() == 3, "write_rgb_png: expected 3 channels");
  std::vector<std::uint16_t> s(rgb.data().size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = std::isfinite(rgb.data()[i]) ? std::clamp(rgb.data()[i], 0.0, 1.0) : 0.0;
    s[i] = static_cast<std::uint16_t>(std::lround(v * 255.0));
  }
  write_png(path, rgb.width(), rgb.height(), 3, 8, s);
}

Image read_depth_png(const fs::path& path) {
  const Raw raw = read_png(path);
  if (raw.channels != 1 || raw.depth != 16) throw IoError(path.string() + ": depth must be a 16-bit grayscale PNG");
  Image d(raw.width, raw.height, 1);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) d.data()[i] = raw.samples[i] / 1000.0;
  return d;
}

void write_depth_png(const fs::path& path, const Image& depth) {
  SNVS_REQUIRE(depth.channels() == 1, "write_depth_png: expected 1 channel");
  std::vector<std::uint16_t> s(depth.data().size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double v = depth.data()[i];
    SNVS_REQUIRE(std::isfinite(v) && v >= 0.0, "write_depth_png: depth must be finite and non-negative");
    const long mm = std::lround(v * 1000.0);
    SNVS_REQUIRE(mm <= 65535, "write_depth_png: depth beyond 65.535 m");
    s[i] = static_cast<std::uint16_t>(mm);
  }
  write_png(path, depth.width(), depth.height(), 1, 16, s);
}

Mask read_mask_png(const fs::path& path) {
  const Raw raw = read_png(path);
  if (raw.channels != 1) throw IoError(path.string() + ": mask must be a grayscale PNG");
  Mask m(raw.width, raw.height);
  for (std::size_t i = 0; i < raw.samples.size(); ++i) m.bits[i] = raw.samples[i] != 0;
  return m;
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  std::vector<std::uint16_t> s(mask.bits.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = mask.bits[i] ? 255 : 0;
  write_png(path, mask.width, mask.height, 1, 8, s);
}

std::string manifest_to_json(const SceneManifest& m) {
  json frames = json::array();
  for (const auto& f : m.frames) {
    json pose = json::array();
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        pose.push_back(r < 3 ? (c < 3 ? f.pose.rotation(r, c) : f.pose.translation[r]) : (c == 3 ? 1.0 : 0.0));
    frames.push_back({{"rgb", f.rgb},
                      {"depth", f.depth},
                      {"intrinsics",
                       {{"fx", f.intrinsics.fx},
                        {"fy", f.intrinsics.fy},
                        {"cx", f.intrinsics.cx},
                        {"cy", f.intrinsics.cy},
                        {"width", f.intrinsics.width},
                        {"height", f.intrinsics.height}}},
                      {"pose", pose}});
  }
  json j = {{"scene_id", m.scene_id},
            {"units", "meters"},
            {"voxel_size", m.voxel_size},
            {"origin", to_json(m.origin)},
            {"frames", frames}};
  if (m.scene) j["scene"] = to_json(*m.scene);
  return j.dump(1) + "\n";
}

SceneManifest manifest_from_json(const std::string& body, const std::string& where) {
  const json j = parse(body, where);
  SceneManifest m;
  m.scene_id = text(field(j, "scene_id", where), where + ".scene_id");
  if (j.contains("units") && j["units"] != "meters") throw IoError(where + ".units: only meters are supported");
  m.voxel_size = number(field(j, "voxel_size", where), where + ".voxel_size");
  if (m.voxel_size <= 0) throw IoError(where + ".voxel_size: must be positive");
  m.origin = vec3(field(j, "origin", where), where + ".origin");
  const json& frames = field(j, "frames", where);
  if (!frames.is_array()) throw IoError(where + ".frames: expected an array");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string w = where + ".frames[" + std::to_string(i) + "]";
    const json& fj = frames[i];
    FrameRecord f;
    f.rgb = text(field(fj, "rgb", w), w + ".rgb");
    f.depth = text(field(fj, "depth", w), w + ".depth");
    const std::string wi = w + ".intrinsics";
    const json& ij = field(fj, "intrinsics", w);
    f.intrinsics.fx = number(field(ij, "fx", wi), wi + ".fx");
    f.intrinsics.fy = number(field(ij, "fy", wi), wi + ".fy");
    f.intrinsics.cx = number(field(ij, "cx", wi), wi + ".cx");
    f.intrinsics.cy = number(field(ij, "cy", wi), wi + ".cy");
    f.intrinsics.width = integer(field(ij, "width", wi), wi + ".width");
    f.intrinsics.height = integer(field(ij, "height", wi), wi + ".height");
    try {
      f.intrinsics.validate();
    } catch (const PreconditionError& e) {
      throw IoError(wi + ": " + e.what());
    }
    const std::string wp = w + ".pose";
    const json& pj = field(fj, "pose", w);
    if (!pj.is_array() || pj.size() != 16) throw IoError(wp + ": expected 16 numbers (4x4 row-major)");
    double p[16];
    for (int k = 0; k < 16; ++k) p[k] = number(pj[k], wp + "[" + std::to_string(k) + "]");
    if (p[12] != 0.0 || p[13] != 0.0 || p[14] != 0.0 || p[15] != 1.0)
      throw IoError(wp + ": last row must be 0 0 0 1");
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) f.pose.rotation(r, c) = p[4 * r + c];
      f.pose.translation[r] = p[4 * r + 3];
    }
    if (!f.pose.is_valid()) throw IoError(wp + ": rotation is not orthonormal with determinant +1");
    m.frames.push_back(f);
  }
  if (j.contains("scene")) m.scene = scene(j["scene"], where + ".scene");
  return m;
}

void write_manifest(const fs::path& path, const SceneManifest& manifest) { spill(path, manifest_to_json(manifest)); }

SceneManifest read_manifest(const fs::path& path) {
  SceneManifest m = manifest_from_json(slurp(path), path.string());
  const fs::path dir = path.parent_path();
  for (std::size_t i = 0; i < m.frames.size(); ++i)
    for (const std::string* rel : {&m.frames[i].rgb, &m.frames[i].depth})
      if (!fs::exists(dir / *rel))
        throw IoError(path.string() + ".frames[" + std::to_string(i) + "]: missing file " + (dir / *rel).string());
  return m;
}

LoadedScene load_scene(const fs::path& manifest_path) {
  LoadedScene out;
  out.manifest = read_manifest(manifest_path);
  out.dir = manifest_path.parent_path();
  for (std::size_t i = 0; i < out.manifest.frames.size(); ++i) {
    const FrameRecord& r = out.manifest.frames[i];
    RgbdFrame f{read_rgb_png(out.dir / r.rgb), read_depth_png(out.dir / r.depth), r.intrinsics, r.pose};
    if (f.rgb.width() != r.intrinsics.width || f.rgb.height() != r.intrinsics.height ||
        f.depth.width() != r.intrinsics.width || f.depth.height() != r.intrinsics.height)
      throw IoError(manifest_path.string() + ".frames[" + std::to_string(i) + "]: image size differs from intrinsics");
    out.frames.push_back(std::move(f));
  }
  return out;
}

void write_triplets(const fs::path& path, const TripletList& list) {
  json arr = json::array();
  for (const auto& t : list.triplets)
    arr.push_back({{"scene", t.scene},
                   {"source1", t.source1},
                   {"source2", t.source2},
                   {"query", t.query},
                   {"overlap1", t.overlap1},
                   {"overlap2", t.overlap2},
                   {"union_overlap", t.union_overlap},
                   {"mask", t.mask}});
  const json j = {{"bounds",
                   {{"pair_tolerance", list.bounds.pair_tolerance},
                    {"max_single", list.bounds.max_single},
                    {"min_union", list.bounds.min_union},
                    {"max_union", list.bounds.max_union}}},
                  {"triplets", arr}};
  spill(path, j.dump(1) + "\n");
}

TripletList read_triplets(const fs::path& path) {
  const std::string where = path.string();
  const json j = parse(slurp(path), where);
  TripletList list;
  const json& b = field(j, "bounds", where);
  list.bounds.pair_tolerance = number(field(b, "pair_tolerance", where + ".bounds"), where + ".bounds.pair_tolerance");
  list.bounds.max_single = number(field(b, "max_single", where + ".bounds"), where + ".bounds.max_single");
  list.bounds.min_union = number(field(b, "min_union", where + ".bounds"), where + ".bounds.min_union");
  list.bounds.max_union = number(field(b, "max_union", where + ".bounds"), where + ".bounds.max_union");
  const json& arr = field(j, "triplets", where);
  if (!arr.is_array()) throw IoError(where + ".triplets: expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string w = where + ".triplets[" + std::to_string(i) + "]";
    TripletRecord t;
    t.scene = text(field(arr[i], "scene", w), w + ".scene");
    t.source1 = index(field(arr[i], "source1", w), w + ".source1");
    t.source2 = index(field(arr[i], "source2", w), w + ".source2");
    t.query = index(field(arr[i], "query", w), w + ".query");
    t.overlap1 = number(field(arr[i], "overlap1", w), w + ".overlap1");
    t.overlap2 = number(field(arr[i], "overlap2", w), w + ".overlap2");
    t.union_overlap = number(field(arr[i], "union_overlap", w), w + ".union_overlap");
    t.mask = text(field(arr[i], "mask", w), w + ".mask");
    if (t.source1 == t.source2 || t.query == t.source1 || t.query == t.source2)
      throw IoError(w + ": source and query indices must be distinct");
    list.triplets.push_back(t);
  }
  return list;
}

}  // namespace snvs::io
