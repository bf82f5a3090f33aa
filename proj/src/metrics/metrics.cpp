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

#include "snvs/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "snvs/error.hpp"

namespace snvs::metrics {

namespace {

constexpr int kWin = 11;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin * kWin>& gaussian_window() {
  static const auto w = [] {
    std::array<double, kWin * kWin> out{};
    std::array<double, kWin> g{};
    for (int i = 0; i < kWin; ++i) g[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
    double sum = 0.0;
    for (int y = 0; y < kWin; ++y)
      for (int x = 0; x < kWin; ++x) sum += out[y * kWin + x] = g[y] * g[x];
    for (auto& v : out) v /= sum;
    return out;
  }();
  return w;
}

void check_pair(const Image& pred, const Image& gt, const char* what) {
  SNVS_REQUIRE(!pred.empty() && pred.same_dims(gt), std::string(what) + ": image dimensions differ");
}

void check_mask(const Image& img, const Mask& mask, const char* what) {
  SNVS_REQUIRE(mask.width == img.width() && mask.height == img.height(),
               std::string(what) + ": mask dimensions differ from image");
}

double psnr_from_mse(double mse) { return mse == 0.0 ? kPsnrSentinel : 10.0 * std::log10(1.0 / mse); }

// Mask-weighted SSIM over the valid windows of the rectangle [x0, x0+w) x [y0, y0+h).
// Windows with no mask weight are skipped; with a full mask this is the textbook definition.
std::optional<double> ssim_region(const Image& a, const Image& b, const Mask& mask, int x0, int y0, int w, int h) {
  const auto& g = gaussian_window();
  const int C = a.channels();
  double total = 0.0;
  std::size_t windows = 0;
  for (int wy = y0; wy + kWin <= y0 + h; ++wy) {
    for (int wx = x0; wx + kWin <= x0 + w; ++wx) {
      double norm = 0.0;
      for (int j = 0; j < kWin; ++j)
        for (int i = 0; i < kWin; ++i)
          if (mask(wx + i, wy + j)) norm += g[j * kWin + i];
      if (norm <= 0.0) continue;
      double acc = 0.0;
      for (int c = 0; c < C; ++c) {
        double ma = 0, mb = 0;
        for (int j = 0; j < kWin; ++j)
          for (int i = 0; i < kWin; ++i) {
            if (!mask(wx + i, wy + j)) continue;
            const double k = g[j * kWin + i] / norm;
            ma += k * a.at(wx + i, wy + j, c);
            mb += k * b.at(wx + i, wy + j, c);
          }
        double va = 0, vb = 0, cov = 0;
        for (int j = 0; j < kWin; ++j)
          for (int i = 0; i < kWin; ++i) {
            if (!mask(wx + i, wy + j)) continue;
            const double k = g[j * kWin + i] / norm;
            const double da = a.at(wx + i, wy + j, c) - ma;
            const double db = b.at(wx + i, wy + j, c) - mb;
            va += k * da * da;
            vb += k * db * db;
            cov += k * da * db;
          }
        acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      }
      total += acc / C;
      ++windows;
    }
  }
  if (windows == 0) return std::nullopt;
  return total / static_cast<double>(windows);
}

}  // namespace

Mask full_mask(int width, int height) { return Mask(width, height, true); }

Mask valid_depth(const Image& depth) {
  Mask m(depth.width(), depth.height());
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x) m.set(x, y, depth.at(x, y) > 0.0);
  return m;
}

Mask intersect(const Mask& a, const Mask& b) {
  SNVS_REQUIRE(a.width == b.width && a.height == b.height, "intersect: mask dimensions differ");
  Mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.bits.size(); ++i) out.bits[i] = a.bits[i] && b.bits[i];
  return out;
}

double psnr(const Image& pred, const Image& gt) {
  check_pair(pred, gt, "psnr");
  return *psnr(pred, gt, full_mask(pred.width(), pred.height()));
}

std::optional<double> psnr(const Image& pred, const Image& gt, const Mask& mask) {
  check_pair(pred, gt, "psnr");
  check_mask(pred, mask, "psnr");
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!mask(x, y)) continue;
      for (int c = 0; c < pred.channels(); ++c) {
        const double d = pred.at(x, y, c) - gt.at(x, y, c);
        sum += d * d;
        ++n;
      }
    }
  if (n == 0) return std::nullopt;
  return psnr_from_mse(sum / static_cast<double>(n));
}

double ssim(const Image& pred, const Image& gt) {
  check_pair(pred, gt, "ssim");
  SNVS_REQUIRE(pred.width() >= kWin && pred.height() >= kWin, "ssim: image must be at least 11x11");
  return *ssim(pred, gt, full_mask(pred.width(), pred.height()));
}

std::optional<double> ssim(const Image& pred, const Image& gt, const Mask& mask) {
  check_pair(pred, gt, "ssim");
  check_mask(pred, mask, "ssim");
  SNVS_REQUIRE(pred.width() >= kWin && pred.height() >= kWin, "ssim: image must be at least 11x11");
  int x0 = pred.width(), y0 = pred.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return std::nullopt;
  // grow a small bounding box to one window, staying inside the image
  auto grow = [](int& lo, int& hi, int limit) {
    while (hi - lo + 1 < kWin) {
      if (lo > 0) --lo;
      if (hi - lo + 1 < kWin && hi < limit - 1) ++hi;
    }
  };
  grow(x0, x1, pred.width());
  grow(y0, y1, pred.height());
  return ssim_region(pred, gt, mask, x0, y0, x1 - x0 + 1, y1 - y0 + 1);
}

DepthScores depth_metrics(const Image& pred, const Image& gt, const Mask& valid) {
  check_pair(pred, gt, "depth_metrics");
  check_mask(pred, valid, "depth_metrics");
  SNVS_REQUIRE(pred.channels() == 1, "depth_metrics: depth images must have one channel");
  double sq = 0.0;
  std::size_t n = 0, good = 0;
  for (int y = 0; y < pred.height(); ++y)
    for (int x = 0; x < pred.width(); ++x) {
      if (!valid(x, y)) continue;
      const double p = pred.at(x, y), t = gt.at(x, y);
      sq += (p - t) * (p - t);
      ++n;
      if (p > 0.0 && t > 0.0 && std::max(p / t, t / p) < 1.25) ++good;
    }
  SNVS_REQUIRE(n > 0, "depth_metrics: mask is empty");
  return {std::sqrt(sq / static_cast<double>(n)), static_cast<double>(good) / static_cast<double>(n)};
}

namespace {

std::optional<Scores> scores_on(const Image& pr, const Image& gr, const Mask& mask, const Image& pd,
                                const Image& gd) {
  const auto p = psnr(pr, gr, mask);
  if (!p) return std::nullopt;
  const auto s = ssim(pr, gr, mask);
  if (!s) return std::nullopt;
  Scores out{*p, *s, std::nullopt};
  if (!gd.empty()) {
    const Mask dv = intersect(mask, valid_depth(gd));
    if (dv.count() > 0) out.depth = depth_metrics(pd, gd, dv);
  }
  return out;
}

}  // namespace

ImageEval masked_eval(const std::string& name, const Image& pred_rgb, const Image& gt_rgb, const Mask& mask,
                      const Image& pred_depth, const Image& gt_depth) {
  check_pair(pred_rgb, gt_rgb, "masked_eval");
  check_mask(pred_rgb, mask, "masked_eval");
  SNVS_REQUIRE(pred_depth.empty() == gt_depth.empty(), "masked_eval: give both depth images or neither");
  if (!gt_depth.empty()) {
    check_pair(pred_depth, gt_depth, "masked_eval depth");
    check_mask(gt_depth, mask, "masked_eval depth");
  }
  ImageEval out;
  out.name = name;
  out.full = *scores_on(pred_rgb, gt_rgb, full_mask(mask.width, mask.height), pred_depth, gt_depth);
  out.unobserved = scores_on(pred_rgb, gt_rgb, mask, pred_depth, gt_depth);
  return out;
}

namespace {

struct Accum {
  double psnr = 0, ssim = 0, rmse = 0, delta = 0;
  std::size_t n = 0, nd = 0;
  void add(const Scores& s) {
    psnr += s.psnr;
    ssim += s.ssim;
    ++n;
    if (s.depth) {
      rmse += s.depth->rmse;
      delta += s.depth->delta125;
      ++nd;
    }
  }
  std::optional<Scores> mean() const {
    if (n == 0) return std::nullopt;
    Scores s{psnr / n, ssim / n, std::nullopt};
    if (nd > 0) s.depth = DepthScores{rmse / nd, delta / nd};
    return s;
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void put(std::ostringstream& os, const std::optional<Scores>& s) {
  if (!s) {
    os << "\t-\t-\t-\t-";
    return;
  }
  os << '\t' << fmt(s->psnr) << '\t' << fmt(s->ssim);
  if (s->depth)
    os << '\t' << fmt(s->depth->rmse) << '\t' << fmt(s->depth->delta125);
  else
    os << "\t-\t-";
}

}  // namespace

Scores EvalReport::mean_full() const {
  Accum a;
  for (const auto& im : images) a.add(im.full);
  auto m = a.mean();
  return m ? *m : Scores{};
}

std::optional<Scores> EvalReport::mean_unobserved() const {
  Accum a;
  for (const auto& im : images)
    if (im.unobserved) a.add(*im.unobserved);
  return a.mean();
}

std::string EvalReport::to_tsv() const {
  std::ostringstream os;
  os << "image\tpsnr_full\tssim_full\trmse_full\tdelta125_full\tpsnr_unobs\tssim_unobs\trmse_unobs\tdelta125_unobs\n";
  for (const auto& im : images) {
    os << im.name;
    put(os, im.full);
    put(os, im.unobserved);
    os << '\n';
  }
  if (!images.empty()) {
    os << "MEAN";
    put(os, mean_full());
    put(os, mean_unobserved());
    os << '\n';
  }
  return os.str();
}

std::string EvalReport::summary() const {
  const Scores f = mean_full();
  const auto u = mean_unobserved();
  auto cell = [](std::optional<double> v) {
    char buf[32];
    if (v)
      std::snprintf(buf, sizeof buf, "%14.4f", *v);
    else
      std::snprintf(buf, sizeof buf, "%14s", "-");
    return std::string(buf);
  };
  auto opt = [](const std::optional<Scores>& s, auto get) -> std::optional<double> {
    if (!s) return std::nullopt;
    return get(*s);
  };
  const std::optional<Scores> fo = images.empty() ? std::nullopt : std::optional<Scores>(f);
  std::ostringstream os;
  char head[96];
  std::snprintf(head, sizeof head, "%-10s%14s%14s\n", "metric", "full frame", "unobserved");
  os << head;
  const auto row = [&](const char* name, auto get) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%-10s", name);
    os << buf << cell(opt(fo, get)) << cell(opt(u, get)) << '\n';
  };
  row("PSNR", [](const Scores& s) -> std::optional<double> { return s.psnr; });
  row("SSIM", [](const Scores& s) -> std::optional<double> { return s.ssim; });
  row("RMSE", [](const Scores& s) -> std::optional<double> {
    return s.depth ? std::optional<double>(s.depth->rmse) : std::nullopt;
  });
  row("d1.25", [](const Scores& s) -> std::optional<double> {
    return s.depth ? std::optional<double>(s.depth->delta125) : std::nullopt;
  });
  os << "images: " << images.size() << '\n';
  return os.str();
}

}  // namespace snvs::metrics
