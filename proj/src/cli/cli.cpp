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

#include "snvs/cli/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "snvs/error.hpp"
#include "snvs/io/io.hpp"
#include "snvs/metrics/metrics.hpp"
#include "snvs/pipeline/pipeline.hpp"
#include "snvs/scenes/scenes.hpp"

namespace snvs::cli {

namespace {

namespace fs = std::filesystem;

std::string numbered(const std::string& prefix, std::size_t i, int width, const std::string& suffix) {
  std::ostringstream s;
  s << prefix << std::setw(width) << std::setfill('0') << i << suffix;
  return s.str();
}

// ---- gen-scenes ----

struct GenArgs {
  int count = 1;
  std::uint64_t seed = 0;
  std::string out;
  double voxel_size = 0.1;
  int positions = 3;
  int headings = 16;
  double snap = 0.0;
  bool solid = false;
};

void gen_scenes(const GenArgs& a, std::ostream& err) {
  SNVS_REQUIRE(a.count > 0, "gen-scenes: --count must be positive");
  SNVS_REQUIRE(a.voxel_size > 0, "gen-scenes: --voxel-size must be positive");
  std::mt19937_64 rng(a.seed);
  scenes::SceneOptions opts;
  opts.snap = a.snap;
  opts.checker = !a.solid;
  scenes::CaptureConfig cc;
  cc.positions = a.positions;
  cc.headings = a.headings;
  const CameraIntrinsics K = scenes::default_intrinsics();
  for (int i = 0; i < a.count; ++i) {
    const std::string id = numbered("scene_", static_cast<std::size_t>(i), 4, "");
    const fs::path dir = fs::path(a.out) / id;
    const scenes::ProceduralScene scene = scenes::generate_scene(rng(), opts);
    io::SceneManifest m;
    m.scene_id = id;
    m.voxel_size = a.voxel_size;
    // cell centers on the walls
    m.origin = scene.room_lo - Vec3::Constant(a.voxel_size / 2);
    m.scene = scene;
    const auto poses = scenes::capture_poses(scene, cc, rng);
    for (std::size_t f = 0; f < poses.size(); ++f) {
      const RgbdFrame frame = scenes::raycast_gt(scene, K, poses[f]);
      io::FrameRecord r{numbered("rgb/", f, 3, ".png"), numbered("depth/", f, 3, ".png"), K, poses[f]};
      io::write_rgb_png(dir / r.rgb, frame.rgb);
      io::write_depth_png(dir / r.depth, frame.depth);
      m.frames.push_back(r);
    }
    io::write_manifest(dir / "manifest.json", m);
    err << id << ": " << m.frames.size() << " frames, " << scene.boxes.size() << " boxes\n";
  }
}

/// A manifest path, or a directory holding */manifest.json (sorted).
std::vector<fs::path> manifests_in(const fs::path& p) {
  if (fs::is_regular_file(p)) return {p};
  if (!fs::is_directory(p)) throw IoError("no such file or directory: " + p.string());
  std::vector<fs::path> out;
  if (fs::exists(p / "manifest.json")) out.push_back(p / "manifest.json");
  for (const auto& e : fs::directory_iterator(p))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path() / "manifest.json");
  std::sort(out.begin(), out.end());
  if (out.empty()) throw IoError(p.string() + ": no manifest.json found");
  return out;
}

// ---- make-triplets ----

struct TripletArgs {
  std::string scenes;
  std::string out;
  scenes::TripletBounds bounds;
};

void make_triplets(const TripletArgs& a, std::ostream& err) {
  const fs::path out(a.out);
  const fs::path base = out.has_parent_path() ? out.parent_path() : fs::path(".");
  io::TripletList list;
  list.bounds = a.bounds;
  for (const auto& mpath : manifests_in(a.scenes)) {
    const io::LoadedScene s = io::load_scene(mpath);
    const auto found = scenes::select_triplets(s.frames, a.bounds);
    const std::string rel = fs::relative(fs::absolute(mpath), fs::absolute(base)).generic_string();
    for (const auto& t : found) {
      const std::string mask = "masks/" + s.manifest.scene_id + "_" + numbered("", t.query, 3, "_") +
                               numbered("", t.source1, 3, "_") + numbered("", t.source2, 3, ".png");
      io::write_mask_png(base / mask, t.unobserved);
      list.triplets.push_back({rel, t.source1, t.source2, t.query, t.overlap1, t.overlap2, t.union_overlap, mask});
    }
    err << s.manifest.scene_id << ": " << found.size() << " triplets\n";
  }
  io::write_triplets(out, list);
}

// ---- shared loading for train / render ----

pipe::Lattice lattice_of(const io::SceneManifest& m) { return {m.voxel_size, m.origin}; }

struct TripletData {
  std::vector<io::TripletRecord> records;
  std::vector<const io::LoadedScene*> scene;  // per record
  std::map<std::string, io::LoadedScene> cache;
};

TripletData load_triplets(const fs::path& path) {
  TripletData d;
  const io::TripletList list = io::read_triplets(path);
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  d.records = list.triplets;
  for (const auto& r : d.records) {
    auto it = d.cache.find(r.scene);
    if (it == d.cache.end()) it = d.cache.emplace(r.scene, io::load_scene(base / r.scene)).first;
    const std::size_t n = it->second.frames.size();
    if (r.source1 >= n || r.source2 >= n || r.query >= n)
      throw IoError(path.string() + ": frame index out of range for " + r.scene);
    d.scene.push_back(&it->second);
  }
  if (d.records.empty()) throw IoError(path.string() + ": no triplets");
  return d;
}

pipe::Triplet triplet_at(const TripletData& d, std::size_t i) {
  const auto& r = d.records[i];
  const auto& s = *d.scene[i];
  return {s.frames[r.source1], s.frames[r.source2], s.frames[r.query], lattice_of(s.manifest)};
}

// ---- train ----

struct TrainArgs {
  int phase = 1;
  std::string data;
  std::string ckpt_in;
  std::string ckpt_out;
  std::string log;
  int steps = 100;
  std::uint64_t seed = 0;
  std::vector<std::string> ablation;
  double lr = 1e-3;
  double lr_final = 0.0;
  double beta2 = 0.999;
  int rays = 1024;
  bool unfreeze = false;
};

pipe::Flags flags_of(const std::vector<std::string>& letters) {
  if (letters.empty()) return {};
  std::string joined;
  for (const auto& l : letters) joined += (joined.empty() ? "" : "+") + l;
  return pipe::Flags::parse(joined);
}

void train(const TrainArgs& a, std::ostream& err) {
  const pipe::ModelConfig model;
  ad::ParamStore store;
  if (a.ckpt_in.empty()) {
    pipe::init_model(store, model, a.seed);
  } else {
    store = pipe::load_checkpoint(a.ckpt_in);
  }
  pipe::TrainConfig cfg;
  cfg.phase = a.phase;
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  cfg.lr = a.lr;
  cfg.lr_final = a.lr_final;
  cfg.beta2 = a.beta2;
  cfg.rays = a.rays;
  cfg.flags = flags_of(a.ablation);
  cfg.unfreeze_renderer = a.unfreeze;
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw IoError("cannot write " + a.log);
    cfg.log = &log;
  }
  cfg.validate();
  pipe::TrainStats st;
  if (a.phase == 1) {
    std::vector<pipe::ViewSet> sets;
    for (const auto& m : manifests_in(a.data)) {
      io::LoadedScene s = io::load_scene(m);
      sets.push_back({std::move(s.frames), lattice_of(s.manifest)});
    }
    st = pipe::train_phase1(store, model, sets, cfg);
  } else {
    const TripletData d = load_triplets(a.data);
    std::map<const io::LoadedScene*, PointCloud> full;
    for (const auto* s : d.scene)
      if (!full.count(s)) full.emplace(s, fuse_frames(s->frames));
    if (a.phase == 2) {
      std::vector<pipe::CompletionPair> pairs;
      for (std::size_t i = 0; i < d.records.size(); ++i) {
        const pipe::Triplet t = triplet_at(d, i);
        const std::vector<RgbdFrame> src{t.source1, t.source2};
        pairs.push_back(pipe::make_completion_pair(fuse_frames(src), full.at(d.scene[i]), t.lattice));
      }
      st = pipe::train_phase2(store, model, pairs, cfg);
    } else if (a.phase == 3) {
      std::vector<pipe::TextureSample> samples;
      std::map<const io::LoadedScene*, sg::SparseFeatureGrid> targets;
      for (std::size_t i = 0; i < d.records.size(); ++i) {
        const pipe::Triplet t = triplet_at(d, i);
        auto it = targets.find(d.scene[i]);
        if (it == targets.end())
          it = targets.emplace(d.scene[i], pipe::embed_cloud(full.at(d.scene[i]), t.lattice, store, model, cfg.flags))
                   .first;
        const std::vector<RgbdFrame> src{t.source1, t.source2};
        samples.push_back(pipe::make_texture_sample(fuse_frames(src), it->second, t.lattice, store, model, cfg.flags));
      }
      st = pipe::train_phase3(store, model, samples, cfg);
    } else {
      std::vector<pipe::Triplet> ts;
      for (std::size_t i = 0; i < d.records.size(); ++i) ts.push_back(triplet_at(d, i));
      st = pipe::train_phase4(store, model, ts, cfg);
    }
  }
  pipe::save_checkpoint(store, a.ckpt_out);
  err << "phase " << a.phase << ": " << st.losses.size() << " steps, " << st.skipped << " skipped";
  if (!st.losses.empty()) err << ", final loss " << std::setprecision(6) << st.losses.back();
  err << "\n";
}

// ---- render ----

struct RenderArgs {
  std::string ckpt;
  std::string triplet;
  std::size_t index = 0;
  int trajectory = 0;
  std::string out;
  std::vector<std::string> ablation;
};

/// Nearest-neighbor 2x upsampling so depth lines up with the full-resolution color.
Image upsample_depth(const Image& d) {
  Image out(d.width() * 2, d.height() * 2, 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out.at(x, y) = d.at(x / 2, y / 2);
  return out;
}

void write_result(const fs::path& dir, const std::string& stem, const pipe::InferResult& r) {
  io::write_rgb_png(dir / (stem + ".png"), r.rgb);
  io::write_depth_png(dir / (stem + ".depth.png"), upsample_depth(r.coarse.depth));
}

void render(const RenderArgs& a, std::ostream& err) {
  const pipe::ModelConfig model;
  ad::ParamStore store = pipe::load_checkpoint(a.ckpt);
  const TripletData d = load_triplets(a.triplet);
  SNVS_REQUIRE(a.index < d.records.size(), "render: --index out of range");
  const pipe::Triplet t = triplet_at(d, a.index);
  const pipe::Flags flags = flags_of(a.ablation);
  const fs::path out(a.out);
  fs::create_directories(out);
  if (a.trajectory == 0) {
    write_result(out, "query",
                 pipe::infer(t.source1, t.source2, t.query.pose, t.query.intrinsics, t.lattice, store, model, flags));
    err << "rendered query view of triplet " << a.index << "\n";
    return;
  }
  SNVS_REQUIRE(a.trajectory >= 2, "render: --trajectory needs at least 2 poses");
  const auto poses = pipe::interpolate_trajectory(t.source1.pose, t.query.pose, a.trajectory);
  const auto frames =
      pipe::render_trajectory(t.source1, t.source2, poses, t.query.intrinsics, t.lattice, store, model, flags);
  for (std::size_t i = 0; i < frames.size(); ++i) write_result(out, numbered("frame_", i, 3, ""), frames[i]);
  err << "rendered " << frames.size() << " trajectory frames\n";
}

// ---- eval ----

struct EvalArgs {
  std::string pred;
  std::string gt;
  std::string mask;
  std::string report;
};

bool is_color_png(const fs::path& p) {
  const std::string n = p.filename().string();
  auto ends = [&](const std::string& s) { return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
  return ends(".png") && !ends(".depth.png") && !ends(".mask.png");
}

fs::path depth_of(const fs::path& color) {
  return color.parent_path() / (color.stem().string() + ".depth.png");
}

void eval(const EvalArgs& a, std::ostream& err) {
  const fs::path pred(a.pred), gt(a.gt);
  std::vector<std::pair<std::string, fs::path>> items;  // name, pred file
  if (fs::is_directory(pred)) {
    for (const auto& e : fs::directory_iterator(pred))
      if (e.is_regular_file() && is_color_png(e.path())) items.push_back({e.path().stem().string(), e.path()});
    std::sort(items.begin(), items.end());
    if (items.empty()) throw IoError(pred.string() + ": no images");
  } else {
    items.push_back({pred.stem().string(), pred});
  }
  metrics::EvalReport report;
  for (const auto& [name, pfile] : items) {
    const fs::path gfile = fs::is_directory(gt) ? gt / (name + ".png") : gt;
    const Image p = io::read_rgb_png(pfile);
    const Image g = io::read_rgb_png(gfile);
    if (!p.same_dims(g)) throw IoError(name + ": prediction and ground truth sizes differ");
    Mask m(p.width(), p.height(), false);
    if (!a.mask.empty()) {
      const fs::path mfile = fs::is_directory(a.mask) ? fs::path(a.mask) / (name + ".png") : fs::path(a.mask);
      m = io::read_mask_png(mfile);
      if (m.width != p.width() || m.height != p.height()) throw IoError(mfile.string() + ": mask size differs");
    }
    Image pd, gd;
    if (fs::exists(depth_of(pfile)) && fs::exists(depth_of(gfile))) {
      pd = io::read_depth_png(depth_of(pfile));
      gd = io::read_depth_png(depth_of(gfile));
    }
    report.images.push_back(metrics::masked_eval(name, p, g, m, pd, gd));
  }
  std::ofstream out(a.report, std::ios::binary);
  if (!out) throw IoError("cannot write " + a.report);
  out << report.to_tsv();
  err << report.summary();
}

}  // namespace

int dispatch(const std::vector<std::string>& argv, std::ostream& err) {
  CLI::App app{"Sparse-voxel novel view synthesis with scene completion", "snvs"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenArgs gen;
  auto* g = app.add_subcommand("gen-scenes", "Generate procedural scenes with rendered RGB-D captures");
  g->add_option("--count", gen.count, "Number of scenes")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--voxel-size", gen.voxel_size, "Lattice voxel size in meters");
  g->add_option("--positions", gen.positions, "Camera positions per scene");
  g->add_option("--headings", gen.headings, "Headings per position");
  g->add_option("--snap", gen.snap, "Snap room and boxes to this grid (0 = off)");
  g->add_flag("--solid", gen.solid, "Solid colors instead of checkers");

  TripletArgs tri;
  auto* t = app.add_subcommand("make-triplets", "Mine source/source/query triplets by view overlap");
  t->add_option("--scenes", tri.scenes, "Scene directory or manifest")->required();
  t->add_option("--min-union", tri.bounds.min_union, "Lower bound of the union overlap");
  t->add_option("--max-union", tri.bounds.max_union, "Upper bound of the union overlap");
  t->add_option("--max-single", tri.bounds.max_single, "Exclusive bound of each source's overlap");
  t->add_option("--pair-tolerance", tri.bounds.pair_tolerance, "Allowed overlap between the two sources");
  t->add_option("--out", tri.out, "Triplet list (JSON)")->required();

  TrainArgs tr;
  auto* r = app.add_subcommand("train", "Run one training phase");
  r->add_option("--phase", tr.phase, "Phase 1-4")->required()->check(CLI::Range(1, 4));
  r->add_option("--data", tr.data, "Scenes (phase 1) or triplet list (phases 2-4)")->required();
  r->add_option("--ckpt-in", tr.ckpt_in, "Starting checkpoint (fresh initialization when omitted)");
  r->add_option("--ckpt-out", tr.ckpt_out, "Checkpoint to write")->required();
  r->add_option("--steps", tr.steps, "Optimizer steps");
  r->add_option("--seed", tr.seed, "Random seed");
  r->add_option("--ablation", tr.ablation, "Enabled components among B E D R (default all)")->expected(1, 4);
  r->add_option("--lr", tr.lr, "Adam learning rate");
  r->add_option("--lr-final", tr.lr_final, "Cosine-decay the learning rate to this value (0 = constant)");
  r->add_option("--beta2", tr.beta2, "Adam second-moment decay");
  r->add_option("--rays", tr.rays, "Phase-1 rays per step");
  r->add_option("--log", tr.log, "Per-step training log (TSV)");
  r->add_flag("--unfreeze-renderer", tr.unfreeze, "Phase 4: also update the decoders");

  RenderArgs rn;
  auto* n = app.add_subcommand("render", "Render the query view or a trajectory of a triplet");
  n->add_option("--ckpt", rn.ckpt, "Checkpoint")->required();
  n->add_option("--triplet", rn.triplet, "Triplet list")->required();
  n->add_option("--index", rn.index, "Triplet index");
  n->add_option("--trajectory", rn.trajectory, "Frames from source 1 to the query (0 = query only)");
  n->add_option("--out", rn.out, "Output directory")->required();
  n->add_option("--ablation", rn.ablation, "Enabled components among B E D R (default all)")->expected(1, 4);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--pred", ev.pred, "Predicted image or directory")->required();
  e->add_option("--gt", ev.gt, "Ground-truth image or directory")->required();
  e->add_option("--mask", ev.mask, "Unobserved-region mask image or directory");
  e->add_option("--report", ev.report, "Report to write (TSV)")->required();

  int threads = 1;
  app.add_option("--threads", threads, "Worker cap")->check(CLI::PositiveNumber);

  std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
  std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    err << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    err << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*g) gen_scenes(gen, err);
    if (*t) make_triplets(tri, err);
    if (*r) train(tr, err);
    if (*n) render(rn, err);
    if (*e) eval(ev, err);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace snvs::cli
