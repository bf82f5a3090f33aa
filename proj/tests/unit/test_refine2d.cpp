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

#include <random>

#include "snvs/autodiff/grad_check.hpp"
#include "snvs/error.hpp"
#include "snvs/refine2d/refine2d.hpp"

using namespace snvs;
using namespace snvs::refine;

namespace {

FeatureImage random_coarse(std::mt19937_64& rng, int w, int h, int d = 32) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FeatureImage f{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1), Image(w, h, d)};
  for (auto& v : f.rgb.data()) v = u(rng);
  for (auto& v : f.feature.data()) v = u(rng) - 0.5;
  return f;
}

// Direct formula for 2x bilinear with half-pixel centers and edge clamping.
double bilinear_ref(const Image& im, int X, int Y, int c) {
  const double sx = (X + 0.5) / 2.0 - 0.5, sy = (Y + 0.5) / 2.0 - 0.5;
  const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
  const double fx = sx - x0, fy = sy - y0;
  auto at = [&](int x, int y) {
    return im.at(std::clamp(x, 0, im.width() - 1), std::clamp(y, 0, im.height() - 1), c);
  };
  return (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x0 + 1, y0)) + fy * ((1 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1));
}

}  // namespace

TEST_CASE("bilinear upsample matches the closed form") {
  std::mt19937_64 rng(1);
  const auto f = random_coarse(rng, 5, 3);
  const Image up = bilinear_upsample(f.rgb);
  CHECK(up.width() == 10);
  CHECK(up.height() == 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 10; ++x)
      for (int c = 0; c < 3; ++c) CHECK(up.at(x, y, c) == doctest::Approx(bilinear_ref(f.rgb, x, y, c)).epsilon(1e-14));
}

TEST_CASE("upsampler with zero residual is bilinear") {
  std::mt19937_64 rng(2);
  ad::ParamStore store;
  init_upsampler(store, {}, rng);
  const auto f = random_coarse(rng, 6, 4);
  CHECK(upsample(f, store) == bilinear_upsample(f.rgb));
  auto flat = f;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) flat.rgb.at(x, y, 0) = 0.3, flat.rgb.at(x, y, 1) = 0.6, flat.rgb.at(x, y, 2) = 0.9;
  const Image out = upsample(flat, store);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x) CHECK(out.at(x, y, 1) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("upsampler output shape, range and errors") {
  std::mt19937_64 rng(3);
  ad::ParamStore store;
  init_upsampler(store, {}, rng, true);
  const auto f = random_coarse(rng, 8, 6);
  const Image out = upsample(f, store);
  CHECK(out.width() == 16);
  CHECK(out.height() == 12);
  CHECK(out.channels() == 3);
  for (double v : out.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(upsample(random_coarse(rng, 8, 6, 8), store), ShapeError);
}

TEST_CASE("upsampler is locally supported") {
  std::mt19937_64 rng(4);
  ad::ParamStore store;
  init_upsampler(store, {}, rng, true);
  auto f = random_coarse(rng, 16, 16);
  const Image a = upsample(f, store);
  f.feature.at(8, 8, 3) += 5.0;
  f.rgb.at(8, 8, 0) = 1.0 - f.rgb.at(8, 8, 0);
  const Image b = upsample(f, store);
  // three coarse convs (3 coarse px = 6 fine), the nearest step, two fine convs
  const int radius = 2 * 3 + 1 + 2;
  bool changed = false;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int c = 0; c < 3; ++c) {
        const bool same = a.at(x, y, c) == b.at(x, y, c);
        if (!same) changed = true;
        if (std::abs(x - 16.5) > radius + 0.5 || std::abs(y - 16.5) > radius + 0.5) CHECK(same);
      }
  CHECK(changed);
}

TEST_CASE("hinge losses") {
  ad::Tape t;
  auto c = [&](std::vector<double> v) {
    const auto n = static_cast<std::int64_t>(v.size());
    return t.constant(ad::Tensor(n, 1, std::move(v)));
  };
  auto l = hinge_losses(c({2, 2, 2}), c({-2, -2}), c({-2, -2}));
  CHECK(l.discriminator.value().item() == 0.0);
  l = hinge_losses(c({0, 0}), c({0, 0}), c({0, 0}));
  CHECK(l.discriminator.value().item() == 2.0);
  CHECK(l.generator.value().item() == 0.0);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.5);
  std::vector<double> r(20), f(20);
  for (auto& x : r) x = n(rng);
  for (auto& x : f) x = n(rng);
  double ld = 0.0, lg = 0.0;
  for (int i = 0; i < 20; ++i) {
    ld += std::max(0.0, 1.0 - r[i]) / 20 + std::max(0.0, 1.0 + f[i]) / 20;
    lg -= f[i] / 20;
  }
  l = hinge_losses(c(r), c(f), c(f));
  CHECK(l.discriminator.value().item() == doctest::Approx(ld).epsilon(1e-14));
  CHECK(l.generator.value().item() == doctest::Approx(lg).epsilon(1e-14));
}

TEST_CASE("discriminator receptive field and logit map") {
  const DiscriminatorConfig cfg;
  CHECK(receptive_field(cfg) == 63);
  std::mt19937_64 rng(6);
  ad::ParamStore store;
  init_discriminator(store, cfg, rng);
  ad::Tape t(false);
  const auto logits = discriminate(t, store, cfg, {t.constant(ad::Tensor(64 * 48, 3, 0.5)), 64, 48});
  CHECK(logits.rows() == 8 * 6);
  CHECK(logits.value().all_finite());
}

TEST_CASE("gradients through upsampler and GAN losses") {
  std::mt19937_64 rng(7);
  ad::ParamStore store;
  const UpsamplerConfig ucfg{"ups", 6, 4};
  DiscriminatorConfig dcfg;
  dcfg.widths = {4, 4, 4};
  dcfg.strides = {2, 2, 1};
  init_upsampler(store, ucfg, rng, true);
  init_discriminator(store, dcfg, rng);
  std::uniform_real_distribution<double> u(0.2, 0.8);
  std::vector<double> coarse(4 * 4 * 6), real(8 * 8 * 3);
  for (auto& v : coarse) v = u(rng);
  for (auto& v : real) v = u(rng);
  store.add("coarse", {16, 6}, coarse);
  ad::Tensor target(64, 3, 0.5);
  auto losses = [&](ad::Tape& t) {
    const ImageVar fake = upsample(t, store, ucfg, {t.param(store, "coarse"), 4, 4});
    const auto gl = gan_losses(t, store, dcfg, {t.constant(ad::Tensor(64, 3, real)), 8, 8}, fake);
    return std::pair{gl, ad::mean(ad::square(ad::sub(fake.data, t.constant(target))))};
  };
  // generator side: every tensor reaches the loss through the non-detached path
  auto gen = [&](ad::Tape& t) {
    const auto [gl, rec] = losses(t);
    return ad::add(gl.generator, rec);
  };
  const auto rg = ad::grad_check(store, gen, {1e-3, 6, 9});
  CHECK(rg.checked >= 40);
  CHECK(rg.max_relative_error < 1e-4);
  // discriminator side: the fake is detached, so only disc.* tensors are compared
  auto disc = [&](ad::Tape& t) { return losses(t).first.discriminator; };
  ad::GradCheckOptions opt{1e-3, 6, 10};
  opt.prefix = "disc";
  const auto rd = ad::grad_check(store, disc, opt);
  CHECK(rd.checked >= 20);
  CHECK(rd.max_relative_error < 1e-4);
}
