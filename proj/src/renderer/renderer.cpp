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

#include "snvs/renderer/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "snvs/error.hpp"

namespace snvs::render {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Bounds {
  VoxelCoord lo, hi;
  bool empty = true;
};

Bounds bounds_of(const sg::CoordSet& s) {
  Bounds b;
  if (s.empty()) return b;
  b.empty = false;
  b.lo = b.hi = s[0];
  for (const auto& c : s.coords()) {
    b.lo = {std::min(b.lo.i, c.i), std::min(b.lo.j, c.j), std::min(b.lo.k, c.k)};
    b.hi = {std::max(b.hi.i, c.i), std::max(b.hi.j, c.j), std::max(b.hi.k, c.k)};
  }
  return b;
}

int& comp(VoxelCoord& c, int a) { return a == 0 ? c.i : (a == 1 ? c.j : c.k); }
int comp(const VoxelCoord& c, int a) { return a == 0 ? c.i : (a == 1 ? c.j : c.k); }

void box_interval(const Ray& ray, const Vec3& lo, const Vec3& hi, double& t0, double& t1) {
  t0 = -kInf;
  t1 = kInf;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a], d = ray.direction[a];
    if (d == 0.0) {
      if (o < lo[a] || o > hi[a]) {
        t0 = kInf;
        t1 = -kInf;
        return;
      }
      continue;
    }
    double ta = (lo[a] - o) / d, tb = (hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
}

std::vector<VoxelHit> traverse(const Ray& ray, const sg::SparseVoxelSet& voxels, const Bounds& b) {
  std::vector<VoxelHit> hits;
  if (b.empty) return hits;
  const sg::GridFrame& f = voxels.frame;
  const double cell = f.cell_size();
  double tb0, tb1;
  box_interval(ray, f.corner(b.lo), f.corner(b.hi + VoxelCoord{1, 1, 1}), tb0, tb1);
  if (!(tb1 > std::max(tb0, 0.0))) return hits;

  const double t_start = std::max(tb0, 0.0);
  const Vec3 p = ray.origin + t_start * ray.direction;
  VoxelCoord c;
  int step[3];
  for (int a = 0; a < 3; ++a) {
    const double q = std::floor((p[a] - f.origin[a]) / cell);
    comp(c, a) = static_cast<int>(std::clamp(q, double(comp(b.lo, a)), double(comp(b.hi, a))));
    const double d = ray.direction[a];
    step[a] = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
  }
  auto boundary = [&](int a) {
    if (step[a] == 0) return kInf;
    const int face = comp(c, a) + (step[a] > 0 ? 1 : 0);
    return (f.origin[a] + face * cell - ray.origin[a]) / ray.direction[a];
  };

  auto consider = [&](const VoxelCoord& v) {
    if (!voxels.contains(v)) return;
    double te, tx;
    slab_interval(ray, f, v, te, tx);
    if (tx > std::max(te, 0.0)) hits.push_back({v, std::max(te, 0.0), tx});
  };

  // a ray lying in a lattice plane touches the cells on both sides of it
  int flat = 0;
  for (int a = 0; a < 3; ++a)
    if (step[a] == 0) flat |= 1 << a;
  auto consider_around = [&](const VoxelCoord& v) {
    if (!flat) return consider(v);
    for (int t = 0; t < 27; ++t) {
      const VoxelCoord o = sg::offset3(t);
      if ((o.i && !(flat & 1)) || (o.j && !(flat & 2)) || (o.k && !(flat & 4))) continue;
      consider(v + o);
    }
  };

  auto consider_block = [&](const VoxelCoord& v) {
    for (int t = 0; t < 27; ++t) consider(v + sg::offset3(t));
  };

  // the entry point may sit on an edge or corner of the start cell
  consider_block(c);
  const int limit = (b.hi.i - b.lo.i) + (b.hi.j - b.lo.j) + (b.hi.k - b.lo.k) + 4;
  for (int it = 0; it < limit; ++it) {
    consider_around(c);
    double tm[3] = {boundary(0), boundary(1), boundary(2)};
    const int axis = static_cast<int>(std::min_element(tm, tm + 3) - tm);
    const double tmin = tm[axis];
    if (!(tmin < kInf)) break;
    // near-simultaneous crossings (edges, corners): every cell around the crossing is a candidate
    int tied = 0;
    for (int a = 0; a < 3; ++a)
      if (step[a] != 0 && std::abs(tm[a] - tmin) <= 1e-9 * (1.0 + std::abs(tmin))) tied |= 1 << a;
    if (tied & (tied - 1)) consider_block(c);
    if (tmin > tb1) break;
    comp(c, axis) += step[axis];
    if (comp(c, axis) < comp(b.lo, axis) || comp(c, axis) > comp(b.hi, axis)) break;
  }
  std::sort(hits.begin(), hits.end(), [](const VoxelHit& x, const VoxelHit& y) {
    return x.t_enter != y.t_enter ? x.t_enter < y.t_enter : x.coord < y.coord;
  });
  hits.erase(std::unique(hits.begin(), hits.end()), hits.end());
  return hits;
}

}  // namespace

void RenderConfig::validate() const {
  SNVS_REQUIRE(step_size > 0.0, "RenderConfig: step_size must be positive");
  SNVS_REQUIRE(early_stop >= 0.0 && early_stop < 1.0, "RenderConfig: early_stop must lie in [0, 1)");
  SNVS_REQUIRE(max_samples >= 1, "RenderConfig: max_samples must be positive");
}

void slab_interval(const Ray& ray, const sg::GridFrame& frame, const VoxelCoord& c, double& t_enter, double& t_exit) {
  box_interval(ray, frame.corner(c), frame.corner(c + VoxelCoord{1, 1, 1}), t_enter, t_exit);
}

std::vector<VoxelHit> intersect_voxels(const Ray& ray, const sg::SparseVoxelSet& voxels) {
  return traverse(ray, voxels, bounds_of(*voxels.coords));
}

RaySamples sample_ray(const std::vector<VoxelHit>& hits, const RenderConfig& cfg, std::mt19937_64* rng) {
  RaySamples s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t h = 0; h < hits.size(); ++h) {
    const double te = hits[h].t_enter, tx = hits[h].t_exit;
    const double len = tx - te;
    const int n = std::max(1, static_cast<int>(std::ceil(len / cfg.step_size - 1e-9)));
    for (int k = 0; k < n; ++k) {
      if (static_cast<int>(s.size()) >= cfg.max_samples) return s;
      const double a = te + k * cfg.step_size;
      const double b = k == n - 1 ? tx : std::min(te + (k + 1) * cfg.step_size, tx);
      s.t.push_back(rng ? a + u(*rng) * (b - a) : 0.5 * (a + b));
      s.delta.push_back(b - a);
      s.hit.push_back(static_cast<int>(h));
    }
  }
  return s;
}

// ---- decoders ----

namespace {

struct Mlp {
  std::vector<ad::Linear> layers;

  void init(ad::ParamStore& store, std::mt19937_64& rng, bool zero) const {
    for (const auto& l : layers) l.init(store, rng, zero);
  }
  ad::Var operator()(ad::Tape& t, ad::ParamStore& s, ad::Var x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](t, s, x);
      if (i + 1 < layers.size()) x = ad::relu(x);
    }
    return x;
  }
};

Mlp make_mlp(const std::string& name, std::vector<int> widths) {
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    m.layers.push_back({name + "." + std::to_string(i), widths[i], widths[i + 1]});
  return m;
}

Mlp alpha_mlp(const DecoderConfig& c) { return make_mlp(c.prefix + ".alpha", {c.alpha_dims, c.hidden, c.hidden, 1}); }
Mlp rgb_mlp(const DecoderConfig& c) {
  return make_mlp(c.prefix + ".rgb", {c.embedding - c.alpha_dims + c.view_dims(), c.hidden, c.hidden, 3});
}
Mlp trunk_mlp(const DecoderConfig& c) { return make_mlp(c.prefix + ".trunk", {c.embedding, c.hidden, c.hidden}); }
ad::Linear sigma_head(const DecoderConfig& c) { return {c.prefix + ".sigma", c.hidden, 1}; }
ad::Linear color_head(const DecoderConfig& c) { return {c.prefix + ".color", c.hidden + c.view_dims(), 3}; }

}  // namespace

void init_decoders(ad::ParamStore& store, const DecoderConfig& cfg, std::mt19937_64& rng, bool zero) {
  SNVS_REQUIRE(cfg.alpha_dims > 0 && cfg.alpha_dims < cfg.embedding, "DecoderConfig: invalid alpha split");
  alpha_mlp(cfg).init(store, rng, zero);
  rgb_mlp(cfg).init(store, rng, zero);
  trunk_mlp(cfg).init(store, rng, zero);
  sigma_head(cfg).init(store, rng, zero);
  color_head(cfg).init(store, rng, zero);
}

std::vector<double> encode_direction(const Vec3& d, int frequencies) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(6 * frequencies));
  for (int k = 0; k < frequencies; ++k) {
    const double w = std::ldexp(std::numbers::pi, k);
    for (int a = 0; a < 3; ++a) {
      out.push_back(std::sin(w * d[a]));
      out.push_back(std::cos(w * d[a]));
    }
  }
  return out;
}

Decoded decode(ad::Tape& tape, ad::ParamStore& store, const DecoderConfig& cfg, ad::Var embedding, ad::Var view) {
  if (embedding.cols() != cfg.embedding)
    throw ShapeError("decode: embedding " + embedding.value().shape_string() + ", expected " +
                     std::to_string(cfg.embedding) + " columns");
  if (cfg.view_dirs && (!view.valid() || view.cols() != cfg.view_dims() || view.rows() != embedding.rows()))
    throw ShapeError("decode: view encoding does not match the embedding rows");
  auto with_view = [&](ad::Var x) {
    if (!cfg.view_dirs) return x;
    const std::vector<ad::Var> parts{x, view};
    return ad::concat_cols(parts);
  };
  if (cfg.disentangled) {
    const ad::Var a = ad::slice_cols(embedding, 0, cfg.alpha_dims);
    const ad::Var c = ad::slice_cols(embedding, cfg.alpha_dims, cfg.embedding);
    return {ad::softplus(alpha_mlp(cfg)(tape, store, a)), ad::sigmoid(rgb_mlp(cfg)(tape, store, with_view(c)))};
  }
  const ad::Var h = ad::relu(trunk_mlp(cfg)(tape, store, embedding));
  return {ad::softplus(sigma_head(cfg)(tape, store, h)), ad::sigmoid(color_head(cfg)(tape, store, with_view(h)))};
}

// ---- compositing ----

void composite_weights(std::span<const double> sigma, std::span<const double> delta, double early_stop,
                       std::vector<double>& weights, double& t_final) {
  weights.assign(sigma.size(), 0.0);
  double T = 1.0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (T < early_stop) break;
    const double keep = std::exp(-sigma[i] * delta[i]);
    weights[i] = T * (1.0 - keep);
    T *= keep;
  }
  t_final = T;
}

ad::Var composite(const std::shared_ptr<const CompositeLayout>& layout, ad::Var sigma, ad::Var rgb, ad::Var feature,
                  const RenderConfig& cfg) {
  const CompositeLayout& L = *layout;
  const std::int64_t S = static_cast<std::int64_t>(L.t.size());
  const std::int64_t R = L.rays();
  if (sigma.rows() != S || sigma.cols() != 1 || rgb.rows() != S || rgb.cols() != 3)
    throw ShapeError("composite: sigma " + sigma.value().shape_string() + " rgb " + rgb.value().shape_string() +
                     " for " + std::to_string(S) + " samples");
  const std::int64_t d = feature.valid() ? feature.cols() : 0;
  if (feature.valid() && feature.rows() != S) throw ShapeError("composite: feature rows do not match samples");
  SNVS_REQUIRE(static_cast<std::int64_t>(L.depth_scale.size()) == R, "composite: depth_scale size mismatch");

  const ad::Tensor& sv = sigma.value();
  const ad::Tensor& cg = rgb.value();
  ad::Tensor out(R, kColFeature + d);
  // per ray: number of samples processed before early termination, and final transmittance
  auto used = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(R));
  auto tfinal = std::make_shared<std::vector<double>>(static_cast<std::size_t>(R));
  std::vector<unsigned char> branch;
  branch.reserve(static_cast<std::size_t>(R) * 2);
  for (std::int64_t r = 0; r < R; ++r) {
    const std::int64_t b = L.offsets[static_cast<std::size_t>(r)], e = L.offsets[static_cast<std::size_t>(r) + 1];
    double T = 1.0, O = 0.0, num = 0.0;
    double* o = out.data() + r * out.cols();
    std::int64_t i = b;
    for (; i < e; ++i) {
      if (T < cfg.early_stop) break;
      const double keep = std::exp(-sv[i] * L.delta[static_cast<std::size_t>(i)]);
      const double w = T * (1.0 - keep);
      for (int c = 0; c < 3; ++c) o[kColRgb + c] += w * cg(i, c);
      O += w;
      num += w * L.t[static_cast<std::size_t>(i)];
      if (d > 0) {
        const double* f = feature.value().data() + i * d;
        for (std::int64_t c = 0; c < d; ++c) o[kColFeature + c] += w * f[c];
      }
      T *= keep;
    }
    for (int c = 0; c < 3; ++c) o[kColRgb + c] += T * cfg.background[c];
    o[kColDepth] = L.depth_scale[static_cast<std::size_t>(r)] * num / std::max(O, 1e-8);
    o[kColOpacity] = O;
    (*used)[static_cast<std::size_t>(r)] = i - b;
    (*tfinal)[static_cast<std::size_t>(r)] = T;
    branch.push_back(static_cast<unsigned char>((i - b) & 0xff));
    branch.push_back(O > 1e-8);
  }
  ad::Tape& tape = *sigma.tape();
  tape.note_branch(branch);

  const int is = sigma.id(), ic = rgb.id(), iff = feature.valid() ? feature.id() : -1;
  std::vector<ad::Var> parents{sigma, rgb};
  if (feature.valid()) parents.push_back(feature);
  const Vec3 bg = cfg.background;
  return tape.record(std::move(out), parents, [layout, used, tfinal, is, ic, iff, d, bg](ad::Tape& tp, int self) {
    const CompositeLayout& L = *layout;
    const ad::Tensor& G = tp.grad(self);
    const ad::Tensor& sv = tp.value(is);
    const ad::Tensor& cv = tp.value(ic);
    const ad::Tensor* fv = iff >= 0 ? &tp.value(iff) : nullptr;
    ad::Tensor* gs = tp.requires_grad(is) ? &tp.grad(is) : nullptr;
    ad::Tensor* gc = tp.requires_grad(ic) ? &tp.grad(ic) : nullptr;
    ad::Tensor* gf = iff >= 0 && tp.requires_grad(iff) ? &tp.grad(iff) : nullptr;
    std::vector<double> w, x, tnext;
    for (std::int64_t r = 0; r < L.rays(); ++r) {
      const std::int64_t b = L.offsets[static_cast<std::size_t>(r)];
      const std::int64_t n = (*used)[static_cast<std::size_t>(r)];
      const double* g = G.data() + r * G.cols();
      // recompute weights and the pre-normalization depth terms
      w.assign(static_cast<std::size_t>(n), 0.0);
      tnext.assign(static_cast<std::size_t>(n), 0.0);
      double T = 1.0, O = 0.0, num = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double keep = std::exp(-sv[b + i] * L.delta[static_cast<std::size_t>(b + i)]);
        w[static_cast<std::size_t>(i)] = T * (1.0 - keep);
        T *= keep;
        tnext[static_cast<std::size_t>(i)] = T;
        O += w[static_cast<std::size_t>(i)];
        num += w[static_cast<std::size_t>(i)] * L.t[static_cast<std::size_t>(b + i)];
      }
      const double scale = L.depth_scale[static_cast<std::size_t>(r)];
      double g_num = 0.0, g_o = g[kColOpacity];
      if (O > 1e-8) {
        g_num = g[kColDepth] * scale / O;
        g_o -= g[kColDepth] * scale * num / (O * O);
      } else {
        g_num = g[kColDepth] * scale / 1e-8;
      }
      // x_i: derivative of the loss with respect to w_i
      x.assign(static_cast<std::size_t>(n), 0.0);
      for (std::int64_t i = 0; i < n; ++i) {
        double xi = g_o + g_num * L.t[static_cast<std::size_t>(b + i)];
        for (int c = 0; c < 3; ++c) xi += g[kColRgb + c] * cv(b + i, c);
        if (fv)
          for (std::int64_t c = 0; c < d; ++c) xi += g[kColFeature + c] * (*fv)(b + i, c);
        x[static_cast<std::size_t>(i)] = xi;
      }
      const double bg_term = (*tfinal)[static_cast<std::size_t>(r)] *
                             (g[kColRgb] * bg[0] + g[kColRgb + 1] * bg[1] + g[kColRgb + 2] * bg[2]);
      double suffix = 0.0;  // sum over k > i of w_k x_k
      for (std::int64_t i = n - 1; i >= 0; --i) {
        const std::size_t u = static_cast<std::size_t>(i);
        if (gs)
          (*gs)[b + i] += L.delta[static_cast<std::size_t>(b + i)] * (tnext[u] * x[u] - suffix - bg_term);
        suffix += w[u] * x[u];
        if (gc)
          for (int c = 0; c < 3; ++c) (*gc)(b + i, c) += w[u] * g[kColRgb + c];
        if (gf)
          for (std::int64_t c = 0; c < d; ++c) (*gf)(b + i, c) += w[u] * g[kColFeature + c];
      }
    }
  });
}

// ---- rendering ----

RayBatch pixel_rays(const CameraIntrinsics& K, const Pose& pose) {
  RayBatch b;
  const Vec3 forward = pose.rotation.col(2);
  b.rays.reserve(static_cast<std::size_t>(K.width) * K.height);
  for (int v = 0; v < K.height; ++v)
    for (int u = 0; u < K.width; ++u) {
      b.rays.push_back(pixel_ray(K, pose, u, v));
      b.depth_scale.push_back(b.rays.back().direction.dot(forward));
    }
  return b;
}

ad::Var render_rays(ad::Tape& tape, ad::ParamStore& store, const SceneRep& scene, const RayBatch& rays,
                    const DecoderConfig& dcfg, const RenderConfig& rcfg, std::mt19937_64* jitter) {
  rcfg.validate();
  SNVS_REQUIRE(rays.depth_scale.size() == rays.rays.size(), "render_rays: depth_scale size mismatch");
  SNVS_REQUIRE(scene.embeddings.rows() == scene.vertices->size(), "render_rays: embedding rows do not match vertices");
  const Bounds bounds = bounds_of(*scene.voxels.coords);
  auto layout = std::make_shared<CompositeLayout>();
  layout->offsets.push_back(0);
  layout->depth_scale = rays.depth_scale;
  auto table = std::make_shared<ad::IndexTable>();
  table->taps = 8;
  auto weights = std::make_shared<std::vector<double>>();
  std::vector<double> view;
  const int vd = dcfg.view_dims();
  for (const Ray& ray : rays.rays) {
    const auto hits = traverse(ray, scene.voxels, bounds);
    const RaySamples s = sample_ray(hits, rcfg, jitter);
    const std::vector<double> enc = vd > 0 ? encode_direction(ray.direction, dcfg.view_frequencies) : std::vector<double>{};
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vec3 p = ray.origin + s.t[i] * ray.direction;
      const sg::CornerSample cs =
          sg::corner_sample(*scene.vertices, scene.voxels.frame, hits[static_cast<std::size_t>(s.hit[i])].coord, p);
      table->index.insert(table->index.end(), cs.rows.begin(), cs.rows.end());
      weights->insert(weights->end(), cs.weights.begin(), cs.weights.end());
      view.insert(view.end(), enc.begin(), enc.end());
      layout->t.push_back(s.t[i]);
      layout->delta.push_back(s.delta[i]);
    }
    layout->offsets.push_back(static_cast<std::int64_t>(layout->t.size()));
  }
  const std::int64_t S = static_cast<std::int64_t>(layout->t.size());
  table->rows = S;
  const ad::Var emb = ad::weighted_gather(scene.embeddings, table, weights);
  const ad::Var vv = vd > 0 ? tape.constant(ad::Tensor(S, vd, std::move(view))) : ad::Var{};
  const Decoded dec = decode(tape, store, dcfg, emb, vv);
  return composite(layout, dec.sigma, dec.rgb, emb, rcfg);
}

FeatureImage to_feature_image(const ad::Tensor& out, int width, int height) {
  SNVS_REQUIRE(out.rows() == static_cast<std::int64_t>(width) * height, "to_feature_image: row count mismatch");
  const int d = static_cast<int>(out.cols()) - kColFeature;
  FeatureImage im{Image(width, height, 3), Image(width, height, 1), Image(width, height, 1),
                  Image(width, height, std::max(d, 1))};
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double* o = out.data() + (static_cast<std::int64_t>(y) * width + x) * out.cols();
      for (int c = 0; c < 3; ++c) im.rgb.at(x, y, c) = o[kColRgb + c];
      im.depth.at(x, y) = o[kColDepth];
      im.opacity.at(x, y) = o[kColOpacity];
      for (int c = 0; c < d; ++c) im.feature.at(x, y, c) = o[kColFeature + c];
    }
  return im;
}

FeatureImage render_view(const sg::SparseFeatureGrid& embeddings, const sg::SparseVoxelSet& voxels, const Pose& pose,
                         const CameraIntrinsics& intrinsics, ad::ParamStore& store, const DecoderConfig& dcfg,
                         const RenderConfig& rcfg) {
  const CameraIntrinsics half = intrinsics.half();
  ad::Tape tape(false);
  const SceneRep scene{voxels, embeddings.coords, tape.constant(embeddings.features)};
  const ad::Var out = render_rays(tape, store, scene, pixel_rays(half, pose), dcfg, rcfg);
  return to_feature_image(out.value(), half.width, half.height);
}

}  // namespace snvs::render
