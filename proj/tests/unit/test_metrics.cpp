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

#include <cmath>
#include <random>

#include "snvs/error.hpp"
#include "snvs/metrics/metrics.hpp"

using namespace snvs;
using namespace snvs::metrics;

namespace {

Image random_image(std::mt19937_64& rng, int w, int h, int c = 3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image im(w, h, c);
  for (auto& v : im.data()) v = u(rng);
  return im;
}

Image checker(int w, int h, int period) {
  Image im(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) im.at(x, y, c) = ((x / period + y / period) % 2) ? 1.0 : 0.0;
  return im;
}

// Textbook SSIM: unnormalized-then-divided Gaussian, plain loops, no mask.
double ssim_ref(const Image& a, const Image& b) {
  double g[11][11], s = 0;
  for (int j = 0; j < 11; ++j)
    for (int i = 0; i < 11; ++i) s += g[j][i] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / 4.5);
  double total = 0;
  int n = 0;
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y + 11 <= a.height(); ++y)
      for (int x = 0; x + 11 <= a.width(); ++x) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int j = 0; j < 11; ++j)
          for (int i = 0; i < 11; ++i) {
            const double k = g[j][i] / s, p = a.at(x + i, y + j, c), q = b.at(x + i, y + j, c);
            ma += k * p;
            mb += k * q;
            aa += k * p * p;
            bb += k * q * q;
            ab += k * p * q;
          }
        const double va = aa - ma * ma, vb = bb - mb * mb, cv = ab - ma * mb;
        total += (2 * ma * mb + 1e-4) * (2 * cv + 9e-4) / ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
        ++n;
      }
  return total / n;
}

}  // namespace

TEST_CASE("psnr closed forms and sentinel") {
  std::mt19937_64 rng(3);
  const Image a = random_image(rng, 8, 6);
  CHECK(psnr(a, a) == kPsnrSentinel);
  Image b(8, 6, 3, 0.5), c(8, 6, 3, 0.6);
  CHECK(psnr(b, c) == doctest::Approx(20.0).epsilon(1e-12));
  const Image d = random_image(rng, 8, 6);
  double mse = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) mse += (a.data()[i] - d.data()[i]) * (a.data()[i] - d.data()[i]);
  mse /= a.data().size();
  CHECK(psnr(a, d) == doctest::Approx(10 * std::log10(1 / mse)).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, Image(6, 8, 3)), PreconditionError);
  // strictly decreasing in error
  Image e(8, 6, 3, 0.7);
  CHECK(psnr(b, e) < psnr(b, c));
}

TEST_CASE("ssim matches the textbook oracle") {
  std::mt19937_64 rng(5);
  const Image a = random_image(rng, 17, 14), b = random_image(rng, 17, 14);
  CHECK(ssim(a, b) == doctest::Approx(ssim_ref(a, b)).epsilon(1e-9));
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);
  const Image k1(12, 12, 3, 0.3);
  CHECK(ssim(k1, k1) == doctest::Approx(1.0).epsilon(1e-12));
  const Image ch = checker(24, 24, 4);
  Image inv = ch;
  for (auto& v : inv.data()) v = 1 - v;
  CHECK(ssim(ch, inv) < 0.5);
  CHECK_THROWS_AS(ssim(Image(10, 20, 3), Image(10, 20, 3)), PreconditionError);
}

TEST_CASE("depth metrics") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.5, 4.0);
  Image gt(9, 7, 1), pred(9, 7, 1);
  for (auto& v : gt.data()) v = u(rng);
  for (auto& v : pred.data()) v = u(rng);
  Mask m(9, 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) m.set(x, y, (x * 7 + y) % 3 != 0);
  const auto same = depth_metrics(gt, gt, m);
  CHECK(same.rmse == 0.0);
  CHECK(same.delta125 == 1.0);
  Image scaled = gt;
  for (auto& v : scaled.data()) v *= 1.3;
  CHECK(depth_metrics(scaled, gt, m).delta125 == 0.0);

  double sq = 0;
  int n = 0, good = 0;
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 9; ++x) {
      if (!m(x, y)) continue;
      const double p = pred.at(x, y), t = gt.at(x, y);
      sq += (p - t) * (p - t);
      ++n;
      good += std::max(p / t, t / p) < 1.25;
    }
  const auto r = depth_metrics(pred, gt, m);
  CHECK(r.rmse == doctest::Approx(std::sqrt(sq / n)).epsilon(1e-12));
  CHECK(r.delta125 == doctest::Approx(double(good) / n));

  Image p2 = pred, g2 = gt;
  for (auto& v : p2.data()) v *= 3.7;
  for (auto& v : g2.data()) v *= 3.7;
  CHECK(depth_metrics(p2, g2, m).delta125 == r.delta125);
  CHECK_THROWS_AS(depth_metrics(pred, gt, Mask(9, 7)), PreconditionError);
}

TEST_CASE("masked eval columns") {
  std::mt19937_64 rng(9);
  const Image a = random_image(rng, 20, 16), b = random_image(rng, 20, 16);
  Image da(20, 16, 1, 2.0), db(20, 16, 1, 2.1);

  const auto full = masked_eval("x", a, b, full_mask(20, 16), da, db);
  REQUIRE(full.unobserved);
  CHECK(full.unobserved->psnr == full.full.psnr);
  CHECK(full.unobserved->ssim == full.full.ssim);
  CHECK(full.unobserved->depth->rmse == full.full.depth->rmse);

  const auto none = masked_eval("y", a, b, Mask(20, 16), da, db);
  CHECK_FALSE(none.unobserved.has_value());

  // right half equal, left half different
  Image c = b;
  Mask right(20, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 10; x < 20; ++x) {
      right.set(x, y, true);
      for (int ch = 0; ch < 3; ++ch) c.at(x, y, ch) = a.at(x, y, ch);
    }
  const auto half = masked_eval("z", c, a, right);
  REQUIRE(half.unobserved);
  CHECK(half.unobserved->psnr == kPsnrSentinel);
  CHECK(half.full.psnr < 50.0);
  CHECK(half.unobserved->ssim == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_FALSE(half.full.depth.has_value());

  // a single masked pixel still gets an ssim through the grown window
  Mask one(20, 16);
  one.set(0, 0, true);
  CHECK(masked_eval("w", a, b, one).unobserved.has_value());
}

TEST_CASE("eval report aggregates and formatting") {
  std::mt19937_64 rng(11);
  EvalReport rep;
  const Image a = random_image(rng, 12, 12), b = random_image(rng, 12, 12);
  Mask m(12, 12);
  m.set(3, 3, true);
  rep.images.push_back(masked_eval("img0", a, b, full_mask(12, 12)));
  rep.images.push_back(masked_eval("img1", b, a, Mask(12, 12)));
  rep.images.push_back(masked_eval("img2", a, a, m));
  const auto mf = rep.mean_full();
  CHECK(mf.psnr == doctest::Approx((rep.images[0].full.psnr + rep.images[1].full.psnr + 99.0) / 3));
  const auto mu = rep.mean_unobserved();
  REQUIRE(mu);
  CHECK(mu->psnr == doctest::Approx((rep.images[0].unobserved->psnr + 99.0) / 2));
  const std::string tsv = rep.to_tsv();
  CHECK(tsv.find("img1\t") != std::string::npos);
  CHECK(tsv.find("MEAN\t") != std::string::npos);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 5);
  CHECK(rep.summary().find("unobserved") != std::string::npos);
  CHECK(rep.to_tsv() == tsv);
}
