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

#include "snvs/sparsegrid/sparsegrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "snvs/error.hpp"

namespace snvs::sg {

namespace {

constexpr std::uint64_t kEmpty = ~std::uint64_t{0};

inline std::uint64_t mix(std::uint64_t x) {
  x ^= x >> 31;
  x *= 0x9e3779b97f4a7c15ULL;
  x ^= x >> 29;
  return x;
}

std::vector<VoxelCoord> sorted_unique(std::vector<VoxelCoord> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

CoordSet::CoordSet(std::vector<VoxelCoord> coords) : coords_(sorted_unique(std::move(coords))) {
  std::size_t cap = 16;
  while (cap < coords_.size() * 2) cap <<= 1;
  keys_.assign(cap, kEmpty);
  slots_.assign(cap, -1);
  mask_ = cap - 1;
  for (std::size_t r = 0; r < coords_.size(); ++r) {
    SNVS_REQUIRE(coords_[r].in_bounds(), "CoordSet: coordinate outside lattice bounds");
    const std::uint64_t key = coords_[r].key();
    std::uint64_t h = mix(key) & mask_;
    while (keys_[h] != kEmpty) h = (h + 1) & mask_;
    keys_[h] = key;
    slots_[h] = static_cast<std::int32_t>(r);
  }
}

std::int32_t CoordSet::find(const VoxelCoord& c) const {
  if (coords_.empty() || !c.in_bounds()) return -1;
  const std::uint64_t key = c.key();
  std::uint64_t h = mix(key) & mask_;
  while (keys_[h] != kEmpty) {
    if (keys_[h] == key) return slots_[h];
    h = (h + 1) & mask_;
  }
  return -1;
}

CoordSetPtr make_coords(std::vector<VoxelCoord> coords) { return std::make_shared<const CoordSet>(std::move(coords)); }

Vec3 GridFrame::corner(const VoxelCoord& c) const {
  return origin + cell_size() * Vec3(c.i, c.j, c.k);
}

Vec3 GridFrame::center(const VoxelCoord& c) const {
  return origin + cell_size() * Vec3(c.i + 0.5, c.j + 0.5, c.k + 0.5);
}

GridFrame GridFrame::coarser() const {
  GridFrame f = *this;
  f.stride *= 2;
  return f;
}

GridFrame GridFrame::finer() const {
  SNVS_REQUIRE(stride >= 2, "GridFrame::finer: already at stride 1");
  GridFrame f = *this;
  f.stride /= 2;
  return f;
}

void SparseFeatureGrid::validate() const {
  if (features.rows() != coords->size())
    throw ShapeError("SparseFeatureGrid: " + std::to_string(features.rows()) + " feature rows for " +
                     std::to_string(coords->size()) + " coords");
  if (!features.all_finite()) throw Error("SparseFeatureGrid: non-finite feature");
}

const double* SparseFeatureGrid::find(const VoxelCoord& c) const {
  const std::int32_t r = coords->find(c);
  return r < 0 ? nullptr : features.data() + static_cast<std::int64_t>(r) * features.cols();
}

ConvKernel::ConvKernel(int size_, int cin_, int cout_)
    : size(size_), cin(cin_), cout(cout_), weights(static_cast<std::int64_t>(size_) * size_ * size_ * cin_, cout_),
      bias(1, cout_) {
  SNVS_REQUIRE(size_ == 2 || size_ == 3, "ConvKernel: size must be 2 or 3");
}

void ConvKernel::validate() const {
  if (weights.rows() != static_cast<std::int64_t>(taps()) * cin || weights.cols() != cout)
    throw ShapeError("ConvKernel: weights " + weights.shape_string() + " do not match size/cin/cout");
  if (bias.rows() != 1 || bias.cols() != cout) throw ShapeError("ConvKernel: bias " + bias.shape_string());
  if (!weights.all_finite() || !bias.all_finite()) throw Error("ConvKernel: non-finite weight");
}

VoxelCoord offset3(int tap) { return {tap / 9 - 1, (tap / 3) % 3 - 1, tap % 3 - 1}; }
VoxelCoord offset2(int tap) { return {tap >> 2, (tap >> 1) & 1, tap & 1}; }
int tap2(const VoxelCoord& d) { return d.i * 4 + d.j * 2 + d.k; }

CoordSetPtr dilate(const CoordSet& in) {
  std::vector<VoxelCoord> out;
  out.reserve(static_cast<std::size_t>(in.size()) * 4);
  for (const auto& c : in.coords())
    for (int t = 0; t < 27; ++t) out.push_back(c + offset3(t));
  return make_coords(std::move(out));
}

CoordSetPtr downsample(const CoordSet& in) {
  std::vector<VoxelCoord> out;
  out.reserve(static_cast<std::size_t>(in.size()));
  for (const auto& c : in.coords()) out.push_back(coarsen(c));
  return make_coords(std::move(out));
}

CoordSetPtr subdivide(const CoordSet& in) {
  std::vector<VoxelCoord> out;
  out.reserve(static_cast<std::size_t>(in.size()) * 8);
  for (const auto& c : in.coords()) {
    const VoxelCoord base{2 * c.i, 2 * c.j, 2 * c.k};
    for (int t = 0; t < 8; ++t) out.push_back(base + offset2(t));
  }
  return make_coords(std::move(out));
}

CoordSetPtr vertex_coords(const CoordSet& voxels) {
  std::vector<VoxelCoord> out;
  out.reserve(static_cast<std::size_t>(voxels.size()) * 3);
  for (const auto& c : voxels.coords())
    for (int t = 0; t < 8; ++t) out.push_back(c + offset2(t));
  return make_coords(std::move(out));
}

ad::IndexTablePtr conv3_table(const CoordSet& in, const CoordSet& out, int dilation) {
  auto table = std::make_shared<ad::IndexTable>();
  table->rows = out.size();
  table->taps = 27;
  table->index.resize(static_cast<std::size_t>(out.size()) * 27);
  std::int32_t* dst = table->index.data();
  for (const auto& q : out.coords())
    for (int t = 0; t < 27; ++t) {
      const VoxelCoord o = offset3(t);
      *dst++ = in.find({q.i + dilation * o.i, q.j + dilation * o.j, q.k + dilation * o.k});
    }
  return table;
}

ad::IndexTablePtr down_table(const CoordSet& in, const CoordSet& out) {
  auto table = std::make_shared<ad::IndexTable>();
  table->rows = out.size();
  table->taps = 8;
  table->index.resize(static_cast<std::size_t>(out.size()) * 8);
  std::int32_t* dst = table->index.data();
  for (const auto& q : out.coords()) {
    const VoxelCoord base{2 * q.i, 2 * q.j, 2 * q.k};
    for (int t = 0; t < 8; ++t) *dst++ = in.find(base + offset2(t));
  }
  return table;
}

ad::IndexTablePtr up_table(const CoordSet& in, const CoordSet& out) {
  auto table = std::make_shared<ad::IndexTable>();
  table->rows = out.size();
  table->taps = 8;
  table->index.assign(static_cast<std::size_t>(out.size()) * 8, -1);
  for (std::int64_t r = 0; r < out.size(); ++r) {
    const VoxelCoord& q = out[r];
    const VoxelCoord parent = coarsen(q);
    const VoxelCoord delta = q - VoxelCoord{2 * parent.i, 2 * parent.j, 2 * parent.k};
    table->index[static_cast<std::size_t>(r * 8 + tap2(delta))] = in.find(parent);
  }
  return table;
}

std::pair<SparseVoxelSet, SparseFeatureGrid> voxelize(const PointCloud& cloud, double voxel_size, const Vec3& origin) {
  SNVS_REQUIRE(!cloud.empty(), "voxelize: empty point cloud");
  SNVS_REQUIRE(cloud.colors.size() == cloud.positions.size(), "voxelize: colors/positions size mismatch");
  std::vector<VoxelCoord> cells(cloud.size());
  for (std::size_t n = 0; n < cloud.size(); ++n) cells[n] = world_to_voxel(cloud.positions[n], origin, voxel_size);
  auto coords = make_coords(cells);
  ad::Tensor sums(coords->size(), 3);
  std::vector<double> counts(static_cast<std::size_t>(coords->size()), 0.0);
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const std::int32_t r = coords->find(cells[n]);
    for (int c = 0; c < 3; ++c) sums(r, c) += cloud.colors[n][c];
    counts[static_cast<std::size_t>(r)] += 1.0;
  }
  for (std::int64_t r = 0; r < sums.rows(); ++r)
    for (int c = 0; c < 3; ++c) sums(r, c) /= counts[static_cast<std::size_t>(r)];
  GridFrame frame;
  frame.voxel_size = voxel_size;
  frame.origin = origin;
  SparseFeatureGrid grid{coords, frame, std::move(sums)};
  grid.validate();
  return {SparseVoxelSet{coords, frame}, std::move(grid)};
}

std::vector<VoxelCoord> vertex_set(const SparseVoxelSet& voxels) { return vertex_coords(*voxels.coords)->coords(); }

namespace {

ad::Var opt_bias(ad::Tape& t, const ad::Tensor& b) { return t.constant(b); }

SparseFeatureGrid to_grid(const SparseTensor& x) { return {x.coords, x.frame, x.features.value()}; }

}  // namespace

SparseFeatureGrid sparse_conv(const SparseFeatureGrid& grid, const ConvKernel& kernel, int stride_out, bool dil) {
  kernel.validate();
  if (kernel.cin != grid.channels())
    throw ShapeError("sparse_conv: kernel expects " + std::to_string(kernel.cin) + " channels, grid has " +
                     std::to_string(grid.channels()));
  ad::Tape t(false);
  const SparseTensor x{grid.coords, grid.frame, t.constant(grid.features)};
  return to_grid(sparse_conv(x, t.constant(kernel.weights), opt_bias(t, kernel.bias), stride_out, dil));
}

SparseFeatureGrid generative_transposed_conv(const SparseFeatureGrid& grid, const ConvKernel& kernel) {
  kernel.validate();
  SNVS_REQUIRE(kernel.size == 2, "generative_transposed_conv: kernel size must be 2");
  if (kernel.cin != grid.channels())
    throw ShapeError("generative_transposed_conv: kernel expects " + std::to_string(kernel.cin) +
                     " channels, grid has " + std::to_string(grid.channels()));
  ad::Tape t(false);
  const SparseTensor x{grid.coords, grid.frame, t.constant(grid.features)};
  return to_grid(generative_transposed_conv(x, t.constant(kernel.weights), opt_bias(t, kernel.bias)));
}

SparseFeatureGrid prune(const SparseFeatureGrid& grid, std::span<const double> logits, double tau) {
  if (static_cast<std::int64_t>(logits.size()) != grid.size())
    throw PreconditionError("prune: " + std::to_string(logits.size()) + " logits for " + std::to_string(grid.size()) +
                            " coords");
  std::vector<VoxelCoord> kept;
  std::vector<double> values;
  for (std::int64_t r = 0; r < grid.size(); ++r) {
    if (!(1.0 / (1.0 + std::exp(-logits[static_cast<std::size_t>(r)])) > tau)) continue;
    kept.push_back((*grid.coords)[r]);
    const double* row = grid.features.data() + r * grid.channels();
    values.insert(values.end(), row, row + grid.channels());
  }
  const auto n = static_cast<std::int64_t>(kept.size());
  return {make_coords(std::move(kept)), grid.frame, ad::Tensor(n, grid.channels(), std::move(values))};
}

SparseTensor sparse_conv(const SparseTensor& x, ad::Var weight, ad::Var bias, int stride_out, bool dil) {
  const std::int64_t cin = x.features.cols();
  if (stride_out == 1) {
    if (weight.rows() != 27 * cin)
      throw ShapeError("sparse_conv: weight " + weight.value().shape_string() + " is not a 27-tap kernel over " +
                       std::to_string(cin) + " channels");
    CoordSetPtr out = dil ? dilate(*x.coords) : x.coords;
    return conv_onto(x, weight, bias, std::move(out));
  }
  SNVS_REQUIRE(stride_out == 2, "sparse_conv: stride must be 1 or 2");
  if (weight.rows() != 8 * cin)
    throw ShapeError("sparse_conv: weight " + weight.value().shape_string() + " is not an 8-tap kernel over " +
                     std::to_string(cin) + " channels");
  CoordSetPtr out = downsample(*x.coords);
  auto table = down_table(*x.coords, *out);
  return {out, x.frame.coarser(), ad::gather_conv(x.features, weight, bias, table)};
}

SparseTensor conv_onto(const SparseTensor& x, ad::Var weight, ad::Var bias, CoordSetPtr out, int dilation) {
  if (weight.rows() != 27 * x.features.cols())
    throw ShapeError("sparse_conv: weight " + weight.value().shape_string() + " does not match " +
                     std::to_string(x.features.cols()) + " input channels");
  auto table = conv3_table(*x.coords, *out, dilation);
  return {std::move(out), x.frame, ad::gather_conv(x.features, weight, bias, table)};
}

SparseTensor generative_transposed_conv(const SparseTensor& x, ad::Var weight, ad::Var bias) {
  SNVS_REQUIRE(x.frame.stride >= 2, "generative_transposed_conv: input stride must be at least 2");
  if (weight.rows() != 8 * x.features.cols())
    throw ShapeError("generative_transposed_conv: weight " + weight.value().shape_string() + " does not match " +
                     std::to_string(x.features.cols()) + " input channels");
  CoordSetPtr out = subdivide(*x.coords);
  auto table = up_table(*x.coords, *out);
  return {out, x.frame.finer(), ad::gather_conv(x.features, weight, bias, table)};
}

SparseTensor select_rows(const SparseTensor& x, const std::vector<bool>& keep) {
  SNVS_REQUIRE(static_cast<std::int64_t>(keep.size()) == x.size(), "select_rows: mask size mismatch");
  std::vector<VoxelCoord> kept;
  auto index = std::make_shared<std::vector<std::int32_t>>();
  for (std::int64_t r = 0; r < x.size(); ++r)
    if (keep[static_cast<std::size_t>(r)]) {
      kept.push_back((*x.coords)[r]);
      index->push_back(static_cast<std::int32_t>(r));
    }
  // coords are sorted, so the kept subsequence stays sorted and rows line up
  return {make_coords(std::move(kept)), x.frame, ad::gather_rows(x.features, std::move(index))};
}

ad::Var align_to(const SparseTensor& x, const CoordSet& target) {
  auto index = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(target.size()));
  for (std::int64_t r = 0; r < target.size(); ++r) (*index)[static_cast<std::size_t>(r)] = x.coords->find(target[r]);
  return ad::gather_rows(x.features, std::move(index));
}

bool locate(const SparseVoxelSet& occupied, const Vec3& p, VoxelCoord& voxel) {
  const double cell = occupied.frame.cell_size();
  const VoxelCoord base = world_to_voxel(p, occupied.frame.origin, cell);
  if (occupied.contains(base)) {
    voxel = base;
    return true;
  }
  // on a face, edge or corner the point also belongs to the lower neighbours
  const Vec3 q = (p - occupied.frame.origin) / cell;
  const bool on[3] = {q.x() == std::floor(q.x()), q.y() == std::floor(q.y()), q.z() == std::floor(q.z())};
  for (int t = 1; t < 8; ++t) {
    const VoxelCoord d = offset2(t);
    if ((d.i && !on[0]) || (d.j && !on[1]) || (d.k && !on[2])) continue;
    const VoxelCoord c = base - d;
    if (occupied.contains(c)) {
      voxel = c;
      return true;
    }
  }
  return false;
}

CornerSample corner_sample(const CoordSet& vertices, const GridFrame& frame, const VoxelCoord& voxel, const Vec3& p) {
  CornerSample s;
  s.voxel = voxel;
  const Vec3 f = (p - frame.corner(voxel)) / frame.cell_size();
  double fx[2][3];
  for (int a = 0; a < 3; ++a) {
    const double v = std::clamp(f[a], 0.0, 1.0);
    fx[0][a] = 1.0 - v;
    fx[1][a] = v;
  }
  for (int t = 0; t < 8; ++t) {
    const VoxelCoord d = offset2(t);
    s.weights[static_cast<std::size_t>(t)] = fx[d.i][0] * fx[d.j][1] * fx[d.k][2];
    const std::int32_t r = vertices.find(voxel + d);
    s.rows[static_cast<std::size_t>(t)] = r;
    if (r < 0) ++s.missing;
  }
  return s;
}

CornerSample gather_corner_features(const SparseFeatureGrid& embeddings, const SparseVoxelSet& occupied,
                                    const Vec3& p) {
  SNVS_REQUIRE(embeddings.frame.kind == LatticeKind::Vertex, "gather_corner_features: grid is not a vertex lattice");
  VoxelCoord voxel;
  if (!locate(occupied, p, voxel)) throw PreconditionError("gather_corner_features: point outside occupied voxels");
  return corner_sample(*embeddings.coords, embeddings.frame, voxel, p);
}

std::vector<double> interpolate(const SparseFeatureGrid& embeddings, const CornerSample& s) {
  const std::int64_t d = embeddings.channels();
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int t = 0; t < 8; ++t) {
    const std::int32_t r = s.rows[static_cast<std::size_t>(t)];
    if (r < 0) continue;
    const double w = s.weights[static_cast<std::size_t>(t)];
    const double* row = embeddings.features.data() + static_cast<std::int64_t>(r) * d;
    for (std::int64_t c = 0; c < d; ++c) out[static_cast<std::size_t>(c)] += w * row[c];
  }
  return out;
}

}  // namespace snvs::sg
