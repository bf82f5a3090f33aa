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

#include "snvs/completion/completion.hpp"

#include <algorithm>
#include <cmath>

#include "snvs/error.hpp"

namespace snvs::comp {

namespace {

std::string name(const std::string& prefix, const char* layer, int l = -1) {
  return prefix + "." + layer + (l >= 0 ? std::to_string(l) : std::string());
}

sg::SparseTensor leaky(sg::SparseTensor x) {
  x.features = ad::leaky_relu(x.features);
  return x;
}

ad::Var param(ad::Tape& t, ad::ParamStore& s, const std::string& n) { return t.param(s, n); }

// per-level geometry layers
ad::ConvLayer geo_conv(const GeometryConfig& c, const char* layer, int l, int taps, int in) {
  return {name(c.prefix, layer, l), taps, in, c.channels};
}

constexpr int kGeoLevels = 3;

}  // namespace

// ---- geometry ----

void init_geometry(ad::ParamStore& store, const GeometryConfig& cfg, std::mt19937_64& rng) {
  geo_conv(cfg, "in", -1, 27, 1).init(store, rng);
  for (int l = 0; l < kGeoLevels; ++l) {
    geo_conv(cfg, "down", l, 8, cfg.channels).init(store, rng);
    geo_conv(cfg, "enc", l, 27, cfg.channels).init(store, rng);
    geo_conv(cfg, "up", l, 8, cfg.channels).init(store, rng);
    geo_conv(cfg, "dec", l, 27, cfg.channels).init(store, rng);
    ad::Linear{name(cfg.prefix, "head", l), cfg.channels, 1}.init(store, rng);
  }
  geo_conv(cfg, "gen", -1, 27, cfg.channels).init(store, rng);
}

bool ClipBox::overlaps(const VoxelCoord& c, int s) const {
  return c.i * s <= hi.i && c.i * s + s - 1 >= lo.i && c.j * s <= hi.j && c.j * s + s - 1 >= lo.j &&
         c.k * s <= hi.k && c.k * s + s - 1 >= lo.k;
}

ClipBox clip_box(const sg::SparseVoxelSet& observed) {
  SNVS_REQUIRE(observed.size() > 0, "clip_box: empty voxel set");
  SNVS_REQUIRE(observed.frame.stride == 1, "clip_box: expects a finest-level set");
  ClipBox b{observed.coords->coords().front(), observed.coords->coords().front()};
  for (const auto& c : observed.coords->coords()) {
    b.lo = {std::min(b.lo.i, c.i), std::min(b.lo.j, c.j), std::min(b.lo.k, c.k)};
    b.hi = {std::max(b.hi.i, c.i), std::max(b.hi.j, c.j), std::max(b.hi.k, c.k)};
  }
  b.lo = b.lo - VoxelCoord{1, 1, 1};
  b.hi = b.hi + VoxelCoord{1, 1, 1};
  return b;
}

sg::CoordSetPtr coarsen_set(const sg::CoordSet& fine, int levels) {
  std::vector<VoxelCoord> out = fine.coords();
  for (auto& c : out)
    for (int l = 0; l < levels; ++l) c = coarsen(c);
  return sg::make_coords(std::move(out));
}

GeometryOutput run_geometry(ad::Tape& tape, ad::ParamStore& store, const GeometryConfig& cfg,
                            const sg::SparseVoxelSet& observed, const sg::SparseVoxelSet* gt) {
  SNVS_REQUIRE(observed.size() > 0, "complete_geometry: empty observed set");
  SNVS_REQUIRE(observed.frame.stride == 1, "complete_geometry: observed set must be at stride 1");
  const ClipBox box = clip_box(observed);

  // encoder path, keeping each level for the skips
  std::vector<sg::SparseTensor> enc;
  sg::SparseTensor x{observed.coords, observed.frame, tape.constant(ad::Tensor(observed.size(), 1, 1.0))};
  x = leaky(sg::sparse_conv(x, param(tape, store, name(cfg.prefix, "in") + ".weight"),
                            param(tape, store, name(cfg.prefix, "in") + ".bias"), 1, false));
  for (int l = 0; l < kGeoLevels; ++l) {
    enc.push_back(x);
    const std::string down = name(cfg.prefix, "down", l), e = name(cfg.prefix, "enc", l);
    x = leaky(sg::sparse_conv(x, param(tape, store, down + ".weight"), param(tape, store, down + ".bias"), 2, false));
    x = leaky(sg::sparse_conv(x, param(tape, store, e + ".weight"), param(tape, store, e + ".bias"), 1, false));
  }
  const std::string gen = name(cfg.prefix, "gen");
  x = leaky(sg::sparse_conv(x, param(tape, store, gen + ".weight"), param(tape, store, gen + ".bias"), 1, true));
  auto clip = [&](const sg::SparseTensor& t) {
    std::vector<bool> keep(static_cast<std::size_t>(t.size()));
    for (std::int64_t r = 0; r < t.size(); ++r) keep[static_cast<std::size_t>(r)] = box.overlaps((*t.coords)[r], t.frame.stride);
    return sg::select_rows(t, keep);
  };
  x = clip(x);

  GeometryOutput out;
  for (int l = kGeoLevels - 1; l >= 0; --l) {
    const std::string up = name(cfg.prefix, "up", l), dec = name(cfg.prefix, "dec", l);
    sg::SparseTensor u = clip(sg::generative_transposed_conv(x, param(tape, store, up + ".weight"),
                                                             param(tape, store, up + ".bias")));
    u.features = ad::add(u.features, sg::align_to(enc[static_cast<std::size_t>(l)], *u.coords));
    u = leaky(sg::conv_onto(leaky(u), param(tape, store, dec + ".weight"), param(tape, store, dec + ".bias"), u.coords));
    const ad::Var logits = ad::Linear{name(cfg.prefix, "head", l), cfg.channels, 1}(tape, store, u.features);

    const int levels_up = l;  // stride 2^l
    const auto forced = coarsen_set(*observed.coords, levels_up);
    const auto truth = gt ? coarsen_set(*gt->coords, levels_up) : nullptr;
    std::vector<bool> keep(static_cast<std::size_t>(u.size()));
    const ad::Tensor& lv = logits.value();
    for (std::int64_t r = 0; r < u.size(); ++r) {
      const VoxelCoord& c = (*u.coords)[r];
      keep[static_cast<std::size_t>(r)] =
          1.0 / (1.0 + std::exp(-lv[r])) > cfg.tau || forced->contains(c) || (truth && truth->contains(c));
    }
    out.levels.push_back({u.coords, u.frame.stride, logits});
    x = sg::select_rows(u, keep);
  }
  out.completed = {x.coords, observed.frame};
  return out;
}

sg::SparseVoxelSet complete_geometry(const sg::SparseVoxelSet& observed, ad::ParamStore& store,
                                     const GeometryConfig& cfg) {
  ad::Tape tape(false);
  return run_geometry(tape, store, cfg, observed).completed;
}

ad::Var geometry_loss(const std::vector<GeometryLevel>& levels, const sg::SparseVoxelSet& gt) {
  SNVS_REQUIRE(!levels.empty(), "geometry_loss: no levels");
  ad::Var total;
  for (const auto& lv : levels) {
    const std::int64_t n = lv.candidates->size();
    SNVS_REQUIRE(n > 0, "geometry_loss: level without candidates");
    int shift = 0;
    while ((1 << shift) < lv.stride) ++shift;
    const auto truth = coarsen_set(*gt.coords, shift);
    ad::Tensor y(n, 1);
    for (std::int64_t r = 0; r < n; ++r) y[r] = truth->contains((*lv.candidates)[r]) ? 1.0 : 0.0;
    ad::Tape& t = *lv.logits.tape();
    const ad::Var bce = ad::mean(ad::sub(ad::softplus(lv.logits), ad::mul(t.constant(std::move(y)), lv.logits)));
    total = total.valid() ? ad::add(total, bce) : bce;
  }
  return total;
}

double finest_bce(const GeometryOutput& out, const sg::SparseVoxelSet& gt) {
  const auto& lv = out.levels.back();
  const ad::Tensor& l = lv.logits.value();
  double s = 0.0;
  for (std::int64_t r = 0; r < l.rows(); ++r) {
    const double y = gt.contains((*lv.candidates)[r]) ? 1.0 : 0.0;
    const double v = l[r];
    s += std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))) - y * v;
  }
  return s / static_cast<double>(l.rows());
}

// ---- texture ----

namespace {

ad::ConvLayer tex_conv(const TextureConfig& c, const char* layer, int taps, int in) {
  return {c.prefix + "." + layer, taps, in, c.channels};
}

}  // namespace

void init_texture(ad::ParamStore& store, const TextureConfig& cfg, std::mt19937_64& rng, bool zero) {
  const int d = cfg.channels;
  tex_conv(cfg, "in", 27, d + 1).init(store, rng, zero);
  for (const char* n : {"down0", "down1", "up0", "up1"}) tex_conv(cfg, n, 8, d).init(store, rng, zero);
  for (const char* n : {"enc1", "enc2", "dec0", "dec1"}) tex_conv(cfg, n, 27, d).init(store, rng, zero);
  ad::Linear{cfg.prefix + ".out", d, d}.init(store, rng, zero);
}

std::int64_t PaddedFeatures::masked_count() const { return std::count(mask.begin(), mask.end(), 1); }

PaddedFeatures pad_features(const sg::SparseFeatureGrid& observed, sg::CoordSetPtr completed) {
  SNVS_REQUIRE(observed.size() > 0, "pad_features: empty observation");
  PaddedFeatures p;
  p.vertices = std::move(completed);
  const std::int64_t d = observed.channels();
  p.features = ad::Tensor(p.vertices->size(), d);
  p.mask.assign(static_cast<std::size_t>(p.vertices->size()), 1);
  for (std::int64_t r = 0; r < observed.size(); ++r) {
    const std::int32_t dst = p.vertices->find((*observed.coords)[r]);
    if (dst < 0) throw PreconditionError("pad_features: observed vertex missing from the completed set");
    std::copy_n(observed.features.data() + r * d, d, p.features.data() + static_cast<std::int64_t>(dst) * d);
    p.mask[static_cast<std::size_t>(dst)] = 0;
  }
  return p;
}

TexturePlan plan_texture(sg::CoordSetPtr vertices) {
  TexturePlan p;
  p.level[0] = std::move(vertices);
  p.level[1] = sg::downsample(*p.level[0]);
  p.level[2] = sg::downsample(*p.level[1]);
  for (int l = 0; l < 3; ++l) p.conv[l] = sg::conv3_table(*p.level[l], *p.level[l]);
  for (int l = 0; l < 2; ++l) {
    p.down[l] = sg::down_table(*p.level[l], *p.level[l + 1]);
    p.up[l] = sg::up_table(*p.level[l + 1], *p.level[l]);
  }
  return p;
}

ad::Var inpaint_texture(ad::Tape& tape, ad::ParamStore& store, const TextureConfig& cfg, const TexturePlan& plan,
                        ad::Var padded, const std::vector<unsigned char>& mask) {
  const std::int64_t m = plan.level[0]->size();
  if (padded.rows() != m || padded.cols() != cfg.channels || static_cast<std::int64_t>(mask.size()) != m)
    throw ShapeError("inpaint_texture: features " + padded.value().shape_string() + " and mask of " +
                     std::to_string(mask.size()) + " for " + std::to_string(m) + " vertices");
  ad::Tensor mcol(m, 1);
  for (std::int64_t r = 0; r < m; ++r) mcol[r] = mask[static_cast<std::size_t>(r)];
  const std::vector<ad::Var> parts{padded, tape.constant(std::move(mcol))};
  auto conv = [&](const char* n, int taps, int in, ad::Var x, const ad::IndexTablePtr& t) {
    return ad::leaky_relu(tex_conv(cfg, n, taps, in)(tape, store, x, t));
  };
  const int d = cfg.channels;
  const ad::Var x0 = conv("in", 27, d + 1, ad::concat_cols(parts), plan.conv[0]);
  ad::Var x1 = conv("down0", 8, d, x0, plan.down[0]);
  x1 = conv("enc1", 27, d, x1, plan.conv[1]);
  ad::Var x2 = conv("down1", 8, d, x1, plan.down[1]);
  x2 = conv("enc2", 27, d, x2, plan.conv[2]);
  ad::Var u1 = ad::add(tex_conv(cfg, "up1", 8, d)(tape, store, x2, plan.up[1]), x1);
  u1 = conv("dec1", 27, d, ad::leaky_relu(u1), plan.conv[1]);
  ad::Var u0 = ad::add(tex_conv(cfg, "up0", 8, d)(tape, store, u1, plan.up[0]), x0);
  u0 = conv("dec0", 27, d, ad::leaky_relu(u0), plan.conv[0]);
  const ad::Var pred = ad::Linear{cfg.prefix + ".out", d, d}(tape, store, u0);

  // observed rows are taken from the input, new rows from the prediction
  auto index = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(m));
  for (std::int64_t r = 0; r < m; ++r)
    (*index)[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(mask[static_cast<std::size_t>(r)] ? m + r : r);
  const std::vector<ad::Var> rows{padded, pred};
  return ad::gather_rows(ad::concat_rows(rows), std::move(index));
}

ad::Tensor inpaint_texture(const PaddedFeatures& in, ad::ParamStore& store, const TextureConfig& cfg) {
  ad::Tape tape(false);
  const TexturePlan plan = plan_texture(in.vertices);
  return inpaint_texture(tape, store, cfg, plan, tape.constant(in.features), in.mask).value();
}

ad::Var texture_loss(ad::Var predicted, const ad::Tensor& target, const std::vector<unsigned char>& mask) {
  if (predicted.rows() != target.rows() || predicted.cols() != target.cols() ||
      static_cast<std::int64_t>(mask.size()) != target.rows())
    throw ShapeError("texture_loss: prediction " + predicted.value().shape_string() + " vs target " +
                     target.shape_string());
  ad::Tape& t = *predicted.tape();
  auto index = std::make_shared<std::vector<std::int32_t>>();
  for (std::size_t r = 0; r < mask.size(); ++r)
    if (mask[r]) index->push_back(static_cast<std::int32_t>(r));
  if (index->empty()) return t.constant(ad::Tensor::scalar(0.0));
  const std::int64_t d = target.cols();
  ad::Tensor tg(static_cast<std::int64_t>(index->size()), d);
  for (std::size_t i = 0; i < index->size(); ++i)
    std::copy_n(target.data() + static_cast<std::int64_t>((*index)[i]) * d, d, tg.data() + static_cast<std::int64_t>(i) * d);
  const double inv = 1.0 / static_cast<double>(index->size());
  return ad::scale(ad::sum(ad::abs(ad::sub(ad::gather_rows(predicted, index), t.constant(std::move(tg))))), inv);
}

}  // namespace snvs::comp
