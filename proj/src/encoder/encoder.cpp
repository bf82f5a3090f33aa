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

#include "snvs/encoder/encoder.hpp"

#include "snvs/error.hpp"

namespace snvs::enc {

namespace {

ad::Linear lift(const EncoderConfig& c) { return {c.prefix + ".lift", 3, c.channels}; }
ad::Linear head(const EncoderConfig& c) { return {c.prefix + ".out", c.channels, c.channels}; }
ad::ConvLayer block_conv(const EncoderConfig& c, int b, int k) {
  return {c.prefix + ".block" + std::to_string(b) + ".conv" + std::to_string(k), 27, c.channels, c.channels};
}

}  // namespace

void init_encoder(ad::ParamStore& store, const EncoderConfig& cfg, std::mt19937_64& rng, bool zero_output) {
  lift(cfg).init(store, rng);
  for (int b = 0; b < cfg.blocks; ++b) {
    block_conv(cfg, b, 0).init(store, rng);
    block_conv(cfg, b, 1).init(store, rng);
  }
  head(cfg).init(store, rng, zero_output);
}

EncoderInput prepare_encoder_input(const PointCloud& cloud, double voxel_size, const Vec3& origin) {
  SNVS_REQUIRE(!cloud.empty(), "encode: empty point cloud");
  auto [voxels, grid] = sg::voxelize(cloud, voxel_size, origin);
  // per-voxel point counts turn the mean colors back into sums
  std::vector<double> counts(static_cast<std::size_t>(voxels.size()), 0.0);
  for (const auto& p : cloud.positions) counts[static_cast<std::size_t>(voxels.coords->find(world_to_voxel(p, origin, voxel_size)))] += 1.0;

  EncoderInput in;
  in.voxels = voxels;
  in.vertices = sg::vertex_coords(*voxels.coords);
  in.vertex_frame = voxels.frame;
  in.vertex_frame.kind = sg::LatticeKind::Vertex;
  const std::int64_t m = in.vertices->size();
  in.vertex_colors = ad::Tensor(m, 3);
  std::vector<double> weight(static_cast<std::size_t>(m), 0.0);
  for (std::int64_t r = 0; r < voxels.size(); ++r) {
    const VoxelCoord& c = (*voxels.coords)[r];
    const double n = counts[static_cast<std::size_t>(r)];
    for (int t = 0; t < 8; ++t) {
      const std::int32_t v = in.vertices->find(c + sg::offset2(t));
      for (int ch = 0; ch < 3; ++ch) in.vertex_colors(v, ch) += n * grid.features(r, ch);
      weight[static_cast<std::size_t>(v)] += n;
    }
  }
  for (std::int64_t v = 0; v < m; ++v)
    for (int ch = 0; ch < 3; ++ch) in.vertex_colors(v, ch) /= weight[static_cast<std::size_t>(v)];
  in.table = sg::conv3_table(*in.vertices, *in.vertices);
  return in;
}

sg::SparseTensor encode(ad::Tape& tape, ad::ParamStore& store, const EncoderConfig& cfg, const EncoderInput& in) {
  ad::Var x = ad::leaky_relu(lift(cfg)(tape, store, tape.constant(in.vertex_colors)));
  for (int b = 0; b < cfg.blocks; ++b) {
    ad::Var h = ad::leaky_relu(block_conv(cfg, b, 0)(tape, store, x, in.table));
    h = block_conv(cfg, b, 1)(tape, store, h, in.table);
    x = ad::leaky_relu(ad::add(x, h));
  }
  return {in.vertices, in.vertex_frame, head(cfg)(tape, store, x)};
}

sg::SparseFeatureGrid encode(const PointCloud& cloud, double voxel_size, const Vec3& origin, ad::ParamStore& store,
                             const EncoderConfig& cfg) {
  const EncoderInput in = prepare_encoder_input(cloud, voxel_size, origin);
  ad::Tape tape(false);
  const auto out = encode(tape, store, cfg, in);
  return {out.coords, out.frame, out.features.value()};
}

ad::Tensor color_embedding(const EncoderInput& in, int channels) {
  SNVS_REQUIRE(channels >= 4, "color_embedding: need at least 4 channels");
  ad::Tensor e(in.vertex_count(), channels);
  for (std::int64_t v = 0; v < e.rows(); ++v) {
    for (int ch = 0; ch < 3; ++ch) e(v, ch) = in.vertex_colors(v, ch);
    e(v, 3) = 1.0;
  }
  return e;
}

}  // namespace snvs::enc
