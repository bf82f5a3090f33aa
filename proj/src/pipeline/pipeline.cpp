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

#include "snvs/pipeline/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "snvs/autodiff/checkpoint.hpp"
#include "snvs/autodiff/ops.hpp"
#include "snvs/autodiff/optimizer.hpp"
#include "snvs/error.hpp"

namespace snvs::pipe {

// ---- flags and configs ----

Flags Flags::parse(const std::string& text) {
  SNVS_REQUIRE(!text.empty(), "ablation: empty flag string");
  Flags f = basic();
  for (char ch : text) {
    switch (ch) {
      case 'B': case 'b': break;
      case 'E': case 'e': f.encoder = true; break;
      case 'D': case 'd': f.disentangled = true; break;
      case 'R': case 'r': f.refine = true; break;
      case '+': case ',': case ' ': break;
      default: SNVS_REQUIRE(false, std::string("ablation: unknown flag '") + ch + "' (expected B, E, D or R)");
    }
  }
  return f;
}

std::string Flags::name() const {
  std::string s = "B";
  if (encoder) s += "+E";
  if (disentangled) s += "+D";
  if (refine) s += "+R";
  return s;
}

render::DecoderConfig ModelConfig::decoder_for(const Flags& flags) const {
  render::DecoderConfig d = decoder;
  d.disentangled = flags.disentangled;
  return d;
}

std::string ModelConfig::describe() const {
  std::ostringstream os;
  os << std::setprecision(17) << "enc " << encoder.channels << ' ' << encoder.blocks << " geo " << geometry.channels
     << ' ' << geometry.tau << " tex " << texture.channels << " dec " << decoder.embedding << ' ' << decoder.alpha_dims
     << ' ' << decoder.hidden << ' ' << decoder.view_dirs << ' ' << decoder.view_frequencies << " render "
     << render.step_size << ' ' << render.max_samples << ' ' << render.early_stop << ' ' << render.background.x()
     << ' ' << render.background.y() << ' ' << render.background.z() << " ups " << upsampler.input << ' '
     << upsampler.hidden << " disc";
  for (int w : discriminator.widths) os << ' ' << w;
  for (int s : discriminator.strides) os << ' ' << s;
  return os.str();
}

void init_model(ad::ParamStore& store, const ModelConfig& m, std::uint64_t seed) {
  const int d = m.encoder.channels;
  SNVS_REQUIRE(m.texture.channels == d && m.decoder.embedding == d && m.upsampler.input == 3 + d,
               "ModelConfig: encoder, texture, decoder and upsampler embedding sizes disagree");
  std::mt19937_64 rng(seed);
  enc::init_encoder(store, m.encoder, rng);
  comp::init_geometry(store, m.geometry, rng);
  comp::init_texture(store, m.texture, rng);
  render::init_decoders(store, m.decoder, rng);
  refine::init_upsampler(store, m.upsampler, rng);
  refine::init_discriminator(store, m.discriminator, rng);
}

void TrainConfig::validate() const {
  SNVS_REQUIRE(phase >= 1 && phase <= 4, "train: phase must be 1, 2, 3 or 4");
  SNVS_REQUIRE(steps >= 0, "train: steps must be non-negative");
  SNVS_REQUIRE(rays > 0, "train: rays must be positive");
  SNVS_REQUIRE(lr > 0 && std::isfinite(lr), "train: learning rate must be positive");
  SNVS_REQUIRE(lr_final >= 0 && lr_final <= lr, "train: final learning rate must lie in [0, lr]");
  SNVS_REQUIRE(beta2 > 0 && beta2 < 1, "train: beta2 must lie in (0, 1)");
  SNVS_REQUIRE(lambda_rgb >= 0 && lambda_depth >= 0 && lambda_gan >= 0 && lambda_full >= 0,
               "train: loss weights must be non-negative");
  SNVS_REQUIRE(!unfreeze_renderer || phase == 4, "train: the renderer can only be unfrozen in phase 4");
}

std::string TrainConfig::describe() const {
  std::ostringstream os;
  os << std::setprecision(17) << "phase " << phase << " steps " << steps << " rays " << rays << " lr " << lr
     << " w " << lambda_rgb << ' ' << lambda_depth << ' ' << lambda_gan << ' ' << lambda_full << " flags "
     << flags.name() << " unfreeze " << unfreeze_renderer << " seed " << seed;
  if (lr_final > 0) os << " lr_final " << lr_final;
  if (beta2 != 0.999) os << " beta2 " << beta2;
  return os.str();
}

double TrainConfig::lr_at(int step) const {
  if (lr_final <= 0 || steps <= 1) return lr;
  const double x = static_cast<double>(step) / (steps - 1);
  return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(std::numbers::pi * x));
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- checkpoints ----

namespace {

void put_meta(ad::ParamStore& store, const std::string& key, double v) {
  const std::string name = std::string(kMetaPrefix) + "." + key;
  if (!store.contains(name)) store.add(name, {1}, {v});
  auto& p = store.at(name);
  p.value[0] = v;
  p.trainable = false;
}

}  // namespace

void write_meta(ad::ParamStore& store, const CheckpointMeta& meta) {
  put_meta(store, "phase", meta.phase);
  put_meta(store, "step", static_cast<double>(meta.step));
  // 32-bit halves are exact in a double
  put_meta(store, "hash_hi", static_cast<double>(meta.config_hash >> 32));
  put_meta(store, "hash_lo", static_cast<double>(meta.config_hash & 0xffffffffULL));
}

std::optional<CheckpointMeta> read_meta(const ad::ParamStore& store) {
  const std::string p = std::string(kMetaPrefix) + ".";
  for (const char* k : {"phase", "step", "hash_hi", "hash_lo"})
    if (!store.contains(p + k)) return std::nullopt;
  CheckpointMeta m;
  m.phase = static_cast<int>(store.at(p + "phase").value[0]);
  m.step = static_cast<std::int64_t>(store.at(p + "step").value[0]);
  m.config_hash = (static_cast<std::uint64_t>(store.at(p + "hash_hi").value[0]) << 32) |
                  static_cast<std::uint64_t>(store.at(p + "hash_lo").value[0]);
  return m;
}

void save_checkpoint(const ad::ParamStore& store, const std::filesystem::path& path) { ad::save_store(store, path); }

ad::ParamStore load_checkpoint(const std::filesystem::path& path) {
  ad::ParamStore store = ad::load_store(path);
  for (auto& [name, p] : store.entries())
    if (name.starts_with(kMetaPrefix)) p.trainable = false;
  return store;
}

void reset_optimizer(ad::ParamStore& store) {
  for (auto& [_, p] : store.entries()) {
    std::fill(p.first_moment.values().begin(), p.first_moment.values().end(), 0.0);
    std::fill(p.second_moment.values().begin(), p.second_moment.values().end(), 0.0);
  }
  store.optimizer_step = 0;
}

void set_trainable_prefixes(ad::ParamStore& store, std::span<const std::string> prefixes) {
  store.set_all_trainable(false);
  for (const auto& p : prefixes) store.set_trainable(p, true);
}

namespace {

void begin_phase(ad::ParamStore& store, const TrainConfig& cfg, const std::vector<std::string>& trainable) {
  cfg.validate();
  reset_optimizer(store);
  set_trainable_prefixes(store, trainable);
}

void end_phase(ad::ParamStore& store, const ModelConfig& model, const TrainConfig& cfg, std::int64_t steps) {
  store.set_all_trainable(true);
  write_meta(store, {cfg.phase, steps, fnv1a(model.describe() + " | " + cfg.describe())});
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(9) << v;
  return os.str();
}

void log_header(const TrainConfig& cfg, std::initializer_list<const char*> terms) {
  if (!cfg.log) return;
  *cfg.log << "step\tphase";
  for (const char* t : terms) *cfg.log << '\t' << t;
  *cfg.log << '\n';
}

void log_line(const TrainConfig& cfg, int step, std::initializer_list<double> values) {
  if (!cfg.log) return;
  *cfg.log << step << '\t' << cfg.phase;
  for (double v : values) *cfg.log << '\t' << fmt(v);
  *cfg.log << '\n';
}

/// Loss weights as a constant column: w[r] = scale for selected rows, 0 otherwise.
ad::Var weight_column(ad::Tape& tape, const std::vector<unsigned char>& sel, double scale) {
  ad::Tensor w(static_cast<std::int64_t>(sel.size()), 1);
  for (std::size_t i = 0; i < sel.size(); ++i) w[static_cast<std::int64_t>(i)] = sel[i] ? scale : 0.0;
  return tape.constant(std::move(w));
}

struct Embedded {
  enc::EncoderInput input;
  sg::SparseFeatureGrid grid;
};

Embedded embed(const PointCloud& cloud, const Lattice& lattice, ad::ParamStore& store, const ModelConfig& model,
               const Flags& flags) {
  Embedded e{enc::prepare_encoder_input(cloud, lattice.voxel_size, lattice.origin), {}};
  e.grid.coords = e.input.vertices;
  e.grid.frame = e.input.vertex_frame;
  if (flags.encoder) {
    ad::Tape tape(false);
    e.grid.features = enc::encode(tape, store, model.encoder, e.input).features.value();
  } else {
    e.grid.features = enc::color_embedding(e.input, model.encoder.channels);
  }
  return e;
}

Vec3 forward_of(const Pose& pose) { return pose.rotation.col(2); }

}  // namespace

// ---- phase 1 ----

bool held_out_pixel(int u, int v) { return ((u * 3 + v * 5) & 7) == 0; }

TrainStats train_phase1(ad::ParamStore& store, const ModelConfig& model, std::span<const ViewSet> scenes,
                        const TrainConfig& cfg) {
  SNVS_REQUIRE(!scenes.empty(), "train_phase1: no scenes");
  std::vector<std::string> trainable{model.decoder.prefix};
  if (cfg.flags.encoder) trainable.push_back(model.encoder.prefix);
  begin_phase(store, cfg, trainable);
  const render::DecoderConfig dcfg = model.decoder_for(cfg.flags);

  struct Prepared {
    enc::EncoderInput input;
    ad::Tensor colors;  // color embeddings for the basic path
    std::vector<std::array<int, 3>> pool;  // frame, u, v
  };
  std::vector<Prepared> prep;
  for (const auto& sc : scenes) {
    SNVS_REQUIRE(!sc.frames.empty(), "train_phase1: scene without frames");
    Prepared p{enc::prepare_encoder_input(fuse_frames(sc.frames), sc.lattice.voxel_size, sc.lattice.origin), {}, {}};
    if (!cfg.flags.encoder) p.colors = enc::color_embedding(p.input, model.encoder.channels);
    for (std::size_t f = 0; f < sc.frames.size(); ++f)
      for (int v = 0; v < sc.frames[f].intrinsics.height; ++v)
        for (int u = 0; u < sc.frames[f].intrinsics.width; ++u)
          if (!held_out_pixel(u, v)) p.pool.push_back({static_cast<int>(f), u, v});
    prep.push_back(std::move(p));
  }

  std::mt19937_64 rng(cfg.seed);
  TrainStats stats;
  log_header(cfg, {"loss", "rgb", "depth", "rays"});
  for (int step = 0; step < cfg.steps; ++step) {
    const std::size_t si = scenes.size() > 1 ? rng() % scenes.size() : 0;
    const auto& sc = scenes[si];
    const auto& p = prep[si];
    const int K = cfg.rays;
    render::RayBatch batch;
    ad::Tensor target_rgb(K, 3), target_depth(K, 1);
    std::vector<unsigned char> sel_rgb(K, 0), sel_depth(K, 0);
    int n_valid = 0;
    for (int r = 0; r < K; ++r) {
      const auto [f, u, v] = p.pool[rng() % p.pool.size()];
      const auto& fr = sc.frames[static_cast<std::size_t>(f)];
      const Ray ray = pixel_ray(fr.intrinsics, fr.pose, u, v);
      batch.rays.push_back(ray);
      batch.depth_scale.push_back(ray.direction.dot(forward_of(fr.pose)));
      for (int c = 0; c < 3; ++c) target_rgb(r, c) = fr.rgb.at(u, v, c);
      target_depth[r] = fr.depth.at(u, v);
      // rays with no ground truth or no voxel on their path are left out of the loss
      if (fr.depth.at(u, v) > 0.0 && !render::intersect_voxels(ray, p.input.voxels).empty()) {
        sel_rgb[r] = sel_depth[r] = 1;
        ++n_valid;
      }
    }
    if (n_valid == 0) {
      warn("phase 1 step " + std::to_string(step) + ": no ray in the batch intersects a voxel, skipped");
      ++stats.skipped;
      continue;
    }
    ad::Tape tape(true);
    const ad::Var emb = cfg.flags.encoder ? enc::encode(tape, store, model.encoder, p.input).features
                                          : tape.constant(p.colors);
    const render::SceneRep rep{p.input.voxels, p.input.vertices, emb};
    const ad::Var out = render::render_rays(tape, store, rep, batch, dcfg, model.render, &rng);
    const ad::Var rgb = ad::slice_cols(out, render::kColRgb, render::kColRgb + 3);
    const ad::Var depth = ad::slice_cols(out, render::kColDepth, render::kColDepth + 1);
    const ad::Var rgb_err = ad::row_sum(ad::square(ad::sub(rgb, tape.constant(target_rgb))));
    const ad::Var depth_err = ad::abs(ad::sub(depth, tape.constant(target_depth)));
    const ad::Var l_rgb = ad::sum(ad::mul(rgb_err, weight_column(tape, sel_rgb, 1.0 / n_valid)));
    const ad::Var l_depth = ad::sum(ad::mul(depth_err, weight_column(tape, sel_depth, 1.0 / n_valid)));
    const ad::Var loss = ad::add(ad::scale(l_rgb, cfg.lambda_rgb), ad::scale(l_depth, cfg.lambda_depth));
    tape.backward(loss, &store);
    ad::adam_step(store, {cfg.lr_at(step), 0.9, cfg.beta2});
    stats.losses.push_back(loss.value().item());
    log_line(cfg, step, {loss.value().item(), l_rgb.value().item(), l_depth.value().item(), double(n_valid)});
  }
  end_phase(store, model, cfg, cfg.steps);
  return stats;
}

ViewScores evaluate_views(ad::ParamStore& store, const ModelConfig& model, const ViewSet& scene, const Flags& flags) {
  const Embedded e = embed(fuse_frames(scene.frames), scene.lattice, store, model, flags);
  const render::DecoderConfig dcfg = model.decoder_for(flags);
  double sq = 0.0, dsq = 0.0;
  std::size_t n = 0, nd = 0, good = 0;
  for (const auto& fr : scene.frames) {
    render::RayBatch batch;
    std::vector<std::array<int, 2>> px;
    for (int v = 0; v < fr.intrinsics.height; ++v)
      for (int u = 0; u < fr.intrinsics.width; ++u)
        if (held_out_pixel(u, v)) {
          const Ray ray = pixel_ray(fr.intrinsics, fr.pose, u, v);
          batch.rays.push_back(ray);
          batch.depth_scale.push_back(ray.direction.dot(forward_of(fr.pose)));
          px.push_back({u, v});
        }
    ad::Tape tape(false);
    const render::SceneRep rep{e.input.voxels, e.grid.coords, tape.constant(e.grid.features)};
    const ad::Tensor out = render::render_rays(tape, store, rep, batch, dcfg, model.render).value();
    for (std::size_t r = 0; r < px.size(); ++r) {
      const auto [u, v] = px[r];
      for (int c = 0; c < 3; ++c) {
        const double d = out(static_cast<std::int64_t>(r), render::kColRgb + c) - fr.rgb.at(u, v, c);
        sq += d * d;
        ++n;
      }
      const double gt = fr.depth.at(u, v);
      if (gt > 0.0) {
        const double pd = out(static_cast<std::int64_t>(r), render::kColDepth);
        dsq += (pd - gt) * (pd - gt);
        ++nd;
        good += pd > 0.0 && std::max(pd / gt, gt / pd) < 1.25;
      }
    }
  }
  ViewScores s;
  const double mse = sq / static_cast<double>(std::max<std::size_t>(n, 1));
  s.psnr = mse == 0.0 ? 99.0 : 10.0 * std::log10(1.0 / mse);
  s.delta125 = nd ? static_cast<double>(good) / nd : 0.0;
  s.depth_rmse = nd ? std::sqrt(dsq / nd) : 0.0;
  return s;
}

// ---- phase 2 ----

CompletionPair make_completion_pair(const PointCloud& partial, const PointCloud& full, const Lattice& lattice) {
  SNVS_REQUIRE(!partial.empty(), "make_completion_pair: empty partial cloud");
  CompletionPair p;
  p.observed = sg::voxelize(partial, lattice.voxel_size, lattice.origin).first;
  p.complete = sg::voxelize(full, lattice.voxel_size, lattice.origin).first;
  std::vector<VoxelCoord> all = p.complete.coords->coords();
  for (const auto& c : p.observed.coords->coords())
    if (!p.complete.contains(c)) all.push_back(c);
  p.complete.coords = sg::make_coords(all);
  return p;
}

TrainStats train_phase2(ad::ParamStore& store, const ModelConfig& model, std::span<const CompletionPair> pairs,
                        const TrainConfig& cfg) {
  SNVS_REQUIRE(!pairs.empty(), "train_phase2: no training pairs");
  begin_phase(store, cfg, {model.geometry.prefix});
  std::mt19937_64 rng(cfg.seed);
  TrainStats stats;
  log_header(cfg, {"loss", "finest_bce"});
  for (int step = 0; step < cfg.steps; ++step) {
    const auto& pair = pairs[pairs.size() > 1 ? rng() % pairs.size() : 0];
    ad::Tape tape(true);
    const comp::GeometryOutput out = comp::run_geometry(tape, store, model.geometry, pair.observed, &pair.complete);
    const ad::Var loss = comp::geometry_loss(out.levels, pair.complete);
    tape.backward(loss, &store);
    ad::adam_step(store, {cfg.lr_at(step), 0.9, cfg.beta2});
    stats.losses.push_back(loss.value().item());
    log_line(cfg, step, {loss.value().item(), comp::finest_bce(out, pair.complete)});
  }
  end_phase(store, model, cfg, cfg.steps);
  return stats;
}

double occupancy_iou(const sg::SparseVoxelSet& a, const sg::SparseVoxelSet& b, const comp::ClipBox* region) {
  std::size_t inter = 0, uni = 0;
  auto inside = [&](const VoxelCoord& c) { return !region || region->overlaps(c, 1); };
  for (const auto& c : a.coords->coords()) {
    if (!inside(c)) continue;
    ++uni;
    inter += b.coords->contains(c);
  }
  for (const auto& c : b.coords->coords())
    if (inside(c) && !a.coords->contains(c)) ++uni;
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

// ---- phase 3 ----

sg::SparseFeatureGrid embed_cloud(const PointCloud& cloud, const Lattice& lattice, ad::ParamStore& store,
                                  const ModelConfig& model, const Flags& flags) {
  return embed(cloud, lattice, store, model, flags).grid;
}

TextureSample make_texture_sample(const PointCloud& partial, const sg::SparseFeatureGrid& target,
                                  const Lattice& lattice, ad::ParamStore& store, const ModelConfig& model,
                                  const Flags& flags) {
  const sg::SparseFeatureGrid f = embed_cloud(partial, lattice, store, model, flags);
  TextureSample s;
  s.input = comp::pad_features(f, target.coords);
  s.target = target.features;
  s.plan = std::make_shared<const comp::TexturePlan>(comp::plan_texture(target.coords));
  return s;
}

TextureSample make_texture_sample(const PointCloud& partial, const PointCloud& full, const Lattice& lattice,
                                  ad::ParamStore& store, const ModelConfig& model, const Flags& flags) {
  return make_texture_sample(partial, embed_cloud(full, lattice, store, model, flags), lattice, store, model, flags);
}

TrainStats train_phase3(ad::ParamStore& store, const ModelConfig& model, std::span<const TextureSample> samples,
                        const TrainConfig& cfg) {
  SNVS_REQUIRE(!samples.empty(), "train_phase3: no training samples");
  begin_phase(store, cfg, {model.texture.prefix});
  std::mt19937_64 rng(cfg.seed);
  TrainStats stats;
  log_header(cfg, {"loss", "masked"});
  for (int step = 0; step < cfg.steps; ++step) {
    const auto& s = samples[samples.size() > 1 ? rng() % samples.size() : 0];
    if (s.input.masked_count() == 0) {
      // nothing to inpaint: zero loss and no update, so Adam momentum cannot move the weights
      stats.losses.push_back(0.0);
      log_line(cfg, step, {0.0, 0.0});
      continue;
    }
    ad::Tape tape(true);
    const ad::Var pred = comp::inpaint_texture(tape, store, model.texture, *s.plan, tape.constant(s.input.features),
                                               s.input.mask);
    const ad::Var loss = comp::texture_loss(pred, s.target, s.input.mask);
    tape.backward(loss, &store);
    ad::adam_step(store, {cfg.lr_at(step), 0.9, cfg.beta2});
    stats.losses.push_back(loss.value().item());
    log_line(cfg, step, {loss.value().item(), static_cast<double>(s.input.masked_count())});
  }
  end_phase(store, model, cfg, cfg.steps);
  return stats;
}

InpaintScores evaluate_inpainting(ad::ParamStore& store, const ModelConfig& model,
                                  std::span<const TextureSample> samples) {
  InpaintScores out;
  int n = 0;
  for (const auto& s : samples) {
    const std::int64_t m = s.input.masked_count();
    if (m == 0) continue;
    const ad::Tensor pred = comp::inpaint_texture(s.input, store, model.texture);
    double lm = 0.0, lz = 0.0;
    for (std::int64_t r = 0; r < pred.rows(); ++r) {
      if (!s.input.mask[static_cast<std::size_t>(r)]) continue;
      for (std::int64_t c = 0; c < pred.cols(); ++c) {
        lm += std::abs(pred(r, c) - s.target(r, c));
        lz += std::abs(s.target(r, c));
      }
    }
    out.model += lm / static_cast<double>(m);
    out.zero_baseline += lz / static_cast<double>(m);
    ++n;
  }
  if (n > 0) {
    out.model /= n;
    out.zero_baseline /= n;
  }
  return out;
}

// ---- inference ----

SceneState build_scene(const RgbdFrame& source1, const RgbdFrame& source2, const Lattice& lattice,
                       ad::ParamStore& store, const ModelConfig& model, const Flags& flags) {
  const std::vector<RgbdFrame> frames{source1, source2};
  const PointCloud cloud = fuse_frames(frames);
  SNVS_REQUIRE(!cloud.empty(), "infer: the fused source cloud is empty");
  const Embedded e = embed(cloud, lattice, store, model, flags);
  SceneState st;
  st.observed = e.input.voxels;
  st.completed = comp::complete_geometry(e.input.voxels, store, model.geometry);
  const sg::CoordSetPtr vertices = sg::make_coords(sg::vertex_set(st.completed));
  const comp::PaddedFeatures padded = comp::pad_features(e.grid, vertices);
  st.embeddings.coords = vertices;
  st.embeddings.frame = e.grid.frame;
  st.embeddings.features = comp::inpaint_texture(padded, store, model.texture);
  return st;
}

InferResult render_scene(const SceneState& state, const Pose& pose, const CameraIntrinsics& intrinsics,
                         ad::ParamStore& store, const ModelConfig& model, const Flags& flags) {
  InferResult r;
  r.coarse = render::render_view(state.embeddings, state.completed, pose, intrinsics, store,
                                 model.decoder_for(flags), model.render);
  r.rgb = flags.refine ? refine::upsample(r.coarse, store, model.upsampler) : refine::bilinear_upsample(r.coarse.rgb);
  r.completed = state.completed;
  return r;
}

InferResult infer(const RgbdFrame& source1, const RgbdFrame& source2, const Pose& query_pose,
                  const CameraIntrinsics& intrinsics, const Lattice& lattice, ad::ParamStore& store,
                  const ModelConfig& model, const Flags& flags) {
  const SceneState st = build_scene(source1, source2, lattice, store, model, flags);
  return render_scene(st, query_pose, intrinsics, store, model, flags);
}

std::vector<InferResult> render_trajectory(const RgbdFrame& source1, const RgbdFrame& source2,
                                           std::span<const Pose> poses, const CameraIntrinsics& intrinsics,
                                           const Lattice& lattice, ad::ParamStore& store, const ModelConfig& model,
                                           const Flags& flags) {
  SNVS_REQUIRE(poses.size() >= 2, "render_trajectory: need at least two poses");
  const SceneState st = build_scene(source1, source2, lattice, store, model, flags);
  std::vector<InferResult> out;
  for (const auto& p : poses) out.push_back(render_scene(st, p, intrinsics, store, model, flags));
  return out;
}

std::vector<Pose> interpolate_trajectory(const Pose& a, const Pose& b, int count) {
  SNVS_REQUIRE(count >= 2, "interpolate_trajectory: need at least two poses");
  std::vector<Pose> out;
  for (int i = 0; i < count; ++i) out.push_back(interpolate_pose(a, b, static_cast<double>(i) / (count - 1)));
  return out;
}

Image downsample_rgb(const Image& rgb) {
  SNVS_REQUIRE(rgb.width() % 2 == 0 && rgb.height() % 2 == 0, "downsample: image size must be even");
  Image out(rgb.width() / 2, rgb.height() / 2, rgb.channels());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < rgb.channels(); ++c)
        out.at(x, y, c) = 0.25 * (rgb.at(2 * x, 2 * y, c) + rgb.at(2 * x + 1, 2 * y, c) +
                                  rgb.at(2 * x, 2 * y + 1, c) + rgb.at(2 * x + 1, 2 * y + 1, c));
  return out;
}

Image downsample_depth(const Image& depth) {
  SNVS_REQUIRE(depth.width() % 2 == 0 && depth.height() % 2 == 0, "downsample: image size must be even");
  Image out(depth.width() / 2, depth.height() / 2, 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int k = 0; k < 4; ++k) {
        const double d = depth.at(2 * x + (k & 1), 2 * y + (k >> 1));
        if (d > 0.0) {
          out.at(x, y) = d;
          break;
        }
      }
  return out;
}

// ---- phase 4 ----

TrainStats train_phase4(ad::ParamStore& store, const ModelConfig& model, std::span<const Triplet> triplets,
                        const TrainConfig& cfg) {
  SNVS_REQUIRE(!triplets.empty(), "train_phase4: no triplets");
  cfg.validate();
  const Flags& flags = cfg.flags;
  const render::DecoderConfig dcfg = model.decoder_for(flags);
  std::vector<std::string> gen_prefixes;
  if (flags.refine) gen_prefixes.push_back(model.upsampler.prefix);
  if (cfg.unfreeze_renderer) gen_prefixes.push_back(model.decoder.prefix);
  const bool use_gan = flags.refine && cfg.lambda_gan > 0.0;
  begin_phase(store, cfg, gen_prefixes);

  struct Prepared {
    SceneState state;
    std::optional<FeatureImage> coarse;  // cached while the renderer is frozen
    ad::Tensor gt_half_rgb, gt_full_rgb, gt_half_depth;
    int w = 0, h = 0;
  };
  std::vector<Prepared> prep;
  for (const auto& t : triplets) {
    Prepared p;
    p.state = build_scene(t.source1, t.source2, t.lattice, store, model, flags);
    const CameraIntrinsics half = t.query.intrinsics.half();
    p.w = half.width;
    p.h = half.height;
    if (!cfg.unfreeze_renderer)
      p.coarse = render::render_view(p.state.embeddings, p.state.completed, t.query.pose, t.query.intrinsics, store,
                                     dcfg, model.render);
    p.gt_half_rgb = refine::to_tensor(downsample_rgb(t.query.rgb));
    p.gt_half_depth = refine::to_tensor(downsample_depth(t.query.depth));
    p.gt_full_rgb = refine::to_tensor(t.query.rgb);
    prep.push_back(std::move(p));
  }

  std::mt19937_64 rng(cfg.seed);
  TrainStats stats;
  log_header(cfg, {"loss", "rgb", "depth", "full", "gan_g", "gan_d"});
  for (int step = 0; step < cfg.steps; ++step) {
    const std::size_t ti = triplets.size() > 1 ? rng() % triplets.size() : 0;
    const auto& t = triplets[ti];
    const auto& p = prep[ti];
    set_trainable_prefixes(store, gen_prefixes);

    ad::Tape tape(true);
    ad::Var rgb, depth, feature, opacity;
    if (p.coarse) {
      rgb = tape.constant(refine::to_tensor(p.coarse->rgb));
      depth = tape.constant(refine::to_tensor(p.coarse->depth));
      opacity = tape.constant(refine::to_tensor(p.coarse->opacity));
      feature = tape.constant(refine::to_tensor(p.coarse->feature));
    } else {
      const render::SceneRep rep{p.state.completed, p.state.embeddings.coords,
                                 tape.constant(p.state.embeddings.features)};
      const ad::Var out =
          render::render_rays(tape, store, rep, render::pixel_rays(t.query.intrinsics.half(), t.query.pose), dcfg,
                              model.render);
      rgb = ad::slice_cols(out, render::kColRgb, render::kColRgb + 3);
      depth = ad::slice_cols(out, render::kColDepth, render::kColDepth + 1);
      opacity = ad::slice_cols(out, render::kColOpacity, render::kColOpacity + 1);
      feature = ad::slice_cols(out, render::kColFeature, out.cols());
    }
    const auto& op = opacity.value().values();
    if (std::none_of(op.begin(), op.end(), [](double o) { return o > 0.0; })) {
      warn("phase 4 step " + std::to_string(step) + ": the query view sees no completed voxel, skipped");
      ++stats.skipped;
      continue;
    }

    const std::int64_t npx = static_cast<std::int64_t>(p.w) * p.h;
    const ad::Var l_rgb = ad::scale(ad::sum(ad::row_sum(ad::square(ad::sub(rgb, tape.constant(p.gt_half_rgb))))),
                                    1.0 / static_cast<double>(npx));
    std::vector<unsigned char> valid(static_cast<std::size_t>(npx));
    int nv = 0;
    for (std::int64_t i = 0; i < npx; ++i) nv += valid[static_cast<std::size_t>(i)] = p.gt_half_depth[i] > 0.0;
    const ad::Var l_depth =
        nv ? ad::sum(ad::mul(ad::abs(ad::sub(depth, tape.constant(p.gt_half_depth))), weight_column(tape, valid, 1.0 / nv)))
           : tape.constant(ad::Tensor::scalar(0.0));

    ad::Var fake;
    if (flags.refine) {
      const std::vector<ad::Var> parts{rgb, feature};
      fake = refine::upsample(tape, store, model.upsampler, {ad::concat_cols(parts), p.w, p.h}).data;
    } else {
      fake = tape.constant(refine::to_tensor(refine::bilinear_upsample(refine::to_image(rgb.value(), p.w, p.h))));
    }
    const ad::Var l_full = ad::mean(ad::abs(ad::sub(fake, tape.constant(p.gt_full_rgb))));
    ad::Var total = ad::add(ad::add(ad::scale(l_rgb, cfg.lambda_rgb), ad::scale(l_depth, cfg.lambda_depth)),
                            ad::scale(l_full, cfg.lambda_full));
    double gan_g = 0.0, gan_d = 0.0;
    const refine::ImageVar real{tape.constant(p.gt_full_rgb), 2 * p.w, 2 * p.h};
    if (use_gan) {
      const refine::GanLosses g = refine::gan_losses(tape, store, model.discriminator, real, {fake, 2 * p.w, 2 * p.h});
      gan_g = g.generator.value().item();
      total = ad::add(total, ad::scale(g.generator, cfg.lambda_gan));
    }
    if (!gen_prefixes.empty()) {
      tape.backward(total, &store);
      ad::adam_step(store, {cfg.lr_at(step), 0.9, cfg.beta2});
    }

    if (use_gan) {
      std::vector<std::string> disc{model.discriminator.prefix};
      set_trainable_prefixes(store, disc);
      ad::Tape dtape(true);
      const refine::ImageVar r2{dtape.constant(p.gt_full_rgb), 2 * p.w, 2 * p.h};
      const refine::ImageVar f2{dtape.constant(fake.value()), 2 * p.w, 2 * p.h};
      const refine::GanLosses g = refine::gan_losses(dtape, store, model.discriminator, r2, f2);
      dtape.backward(g.discriminator, &store);
      ad::adam_step(store, {cfg.lr_at(step), 0.9, cfg.beta2});
      gan_d = g.discriminator.value().item();
    }
    stats.losses.push_back(total.value().item());
    log_line(cfg, step, {total.value().item(), l_rgb.value().item(), l_depth.value().item(), l_full.value().item(),
                         gan_g, gan_d});
  }
  end_phase(store, model, cfg, cfg.steps);
  return stats;
}

}  // namespace snvs::pipe
