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

#include "snvs/refine2d/refine2d.hpp"

#include <algorithm>

#include "snvs/error.hpp"

namespace snvs::refine {

ad::Tensor to_tensor(const Image& im) {
  return ad::Tensor(static_cast<std::int64_t>(im.width()) * im.height(), im.channels(), im.data());
}

Image to_image(const ad::Tensor& t, int width, int height) {
  SNVS_REQUIRE(t.rows() == static_cast<std::int64_t>(width) * height, "to_image: row count mismatch");
  Image im(width, height, static_cast<int>(t.cols()));
  std::copy_n(t.data(), t.size(), im.data().data());
  return im;
}

ad::IndexTablePtr conv2d_table(int w, int h, int stride) {
  SNVS_REQUIRE(w > 0 && h > 0 && (stride == 1 || stride == 2), "conv2d_table: bad geometry");
  const int ow = (w + stride - 1) / stride, oh = (h + stride - 1) / stride;
  auto t = std::make_shared<ad::IndexTable>();
  t->rows = static_cast<std::int64_t>(ow) * oh;
  t->taps = 9;
  t->index.reserve(static_cast<std::size_t>(t->rows) * 9);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = x * stride + dx, sy = y * stride + dy;
          t->index.push_back(sx >= 0 && sy >= 0 && sx < w && sy < h ? sy * w + sx : -1);
        }
  return t;
}

std::shared_ptr<std::vector<std::int32_t>> nearest2x_index(int w, int h) {
  auto idx = std::make_shared<std::vector<std::int32_t>>();
  idx->reserve(static_cast<std::size_t>(4) * w * h);
  for (int y = 0; y < 2 * h; ++y)
    for (int x = 0; x < 2 * w; ++x) idx->push_back((y / 2) * w + x / 2);
  return idx;
}

Bilinear2x bilinear2x(int w, int h) {
  auto t = std::make_shared<ad::IndexTable>();
  auto wt = std::make_shared<std::vector<double>>();
  t->rows = static_cast<std::int64_t>(4) * w * h;
  t->taps = 4;
  // neighbour on the near side of the output pixel center and the 0.75 / 0.25 split
  auto axis = [](int X, int n, int& a, int& b) {
    const int i = X / 2;
    a = i;
    b = std::clamp(X % 2 == 0 ? i - 1 : i + 1, 0, n - 1);
  };
  for (int Y = 0; Y < 2 * h; ++Y)
    for (int X = 0; X < 2 * w; ++X) {
      int x0, x1, y0, y1;
      axis(X, w, x0, x1);
      axis(Y, h, y0, y1);
      const int ys[2] = {y0, y1}, xs[2] = {x0, x1};
      const double f[2] = {0.75, 0.25};
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          t->index.push_back(ys[a] * w + xs[b]);
          wt->push_back(f[a] * f[b]);
        }
    }
  return {t, wt};
}

Image bilinear_upsample(const Image& im) {
  ad::Tape tape(false);
  const Bilinear2x b = bilinear2x(im.width(), im.height());
  return to_image(ad::weighted_gather(tape.constant(to_tensor(im)), b.table, b.weights).value(), 2 * im.width(),
                  2 * im.height());
}

// ---- upsampler ----

namespace {

ad::ConvLayer ups_conv(const UpsamplerConfig& c, int i) {
  const int in = i == 0 ? c.input : c.hidden;
  const int out = i == 4 ? 3 : c.hidden;
  return {c.prefix + ".conv" + std::to_string(i), 9, in, out};
}

}  // namespace

void init_upsampler(ad::ParamStore& store, const UpsamplerConfig& cfg, std::mt19937_64& rng, bool random_residual) {
  for (int i = 0; i < 5; ++i) ups_conv(cfg, i).init(store, rng, i == 4 && !random_residual);
}

ad::Tensor coarse_input(const FeatureImage& coarse) {
  const int w = coarse.width(), h = coarse.height();
  const int d = coarse.feature.channels();
  ad::Tensor t(static_cast<std::int64_t>(w) * h, 3 + d);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double* row = t.data() + (static_cast<std::int64_t>(y) * w + x) * t.cols();
      for (int c = 0; c < 3; ++c) row[c] = coarse.rgb.at(x, y, c);
      for (int c = 0; c < d; ++c) row[3 + c] = coarse.feature.at(x, y, c);
    }
  return t;
}

ImageVar upsample(ad::Tape& tape, ad::ParamStore& store, const UpsamplerConfig& cfg, const ImageVar& coarse) {
  if (coarse.data.cols() != cfg.input)
    throw ShapeError("upsample: input has " + std::to_string(coarse.data.cols()) + " channels, expected " +
                     std::to_string(cfg.input));
  if (coarse.data.rows() != static_cast<std::int64_t>(coarse.width) * coarse.height)
    throw ShapeError("upsample: pixel count does not match the image size");
  const int w = coarse.width, h = coarse.height;
  const auto lo = conv2d_table(w, h, 1);
  const auto hi = conv2d_table(2 * w, 2 * h, 1);
  ad::Var x = coarse.data;
  for (int i = 0; i < 3; ++i) x = ad::leaky_relu(ups_conv(cfg, i)(tape, store, x, lo));
  x = ad::gather_rows(x, nearest2x_index(w, h));
  x = ad::leaky_relu(ups_conv(cfg, 3)(tape, store, x, hi));
  const ad::Var residual = ups_conv(cfg, 4)(tape, store, x, hi);
  const Bilinear2x b = bilinear2x(w, h);
  const ad::Var base = ad::weighted_gather(ad::slice_cols(coarse.data, 0, 3), b.table, b.weights);
  return {ad::clamp(ad::add(base, residual), 0.0, 1.0), 2 * w, 2 * h};
}

Image upsample(const FeatureImage& coarse, ad::ParamStore& store, const UpsamplerConfig& cfg) {
  ad::Tape tape(false);
  const ImageVar in{tape.constant(coarse_input(coarse)), coarse.width(), coarse.height()};
  const ImageVar out = upsample(tape, store, cfg, in);
  return to_image(out.data.value(), out.width, out.height);
}

// ---- discriminator ----

namespace {

ad::ConvLayer disc_conv(const DiscriminatorConfig& c, std::size_t i) {
  const int in = i == 0 ? 3 : c.widths[i - 1];
  const int out = i < c.widths.size() ? c.widths[i] : 1;
  return {c.prefix + ".conv" + std::to_string(i), 9, in, out};
}

}  // namespace

void init_discriminator(ad::ParamStore& store, const DiscriminatorConfig& cfg, std::mt19937_64& rng) {
  SNVS_REQUIRE(cfg.widths.size() == cfg.strides.size(), "DiscriminatorConfig: widths/strides size mismatch");
  for (std::size_t i = 0; i <= cfg.widths.size(); ++i) disc_conv(cfg, i).init(store, rng);
}

ad::Var discriminate(ad::Tape& tape, ad::ParamStore& store, const DiscriminatorConfig& cfg, const ImageVar& rgb) {
  if (rgb.data.cols() != 3) throw ShapeError("discriminate: expected 3 channels, got " + std::to_string(rgb.data.cols()));
  ad::Var x = rgb.data;
  int w = rgb.width, h = rgb.height;
  for (std::size_t i = 0; i <= cfg.widths.size(); ++i) {
    const int s = i < cfg.strides.size() ? cfg.strides[i] : 1;
    x = disc_conv(cfg, i)(tape, store, x, conv2d_table(w, h, s));
    w = (w + s - 1) / s;
    h = (h + s - 1) / s;
    if (i < cfg.widths.size()) x = ad::leaky_relu(x);
  }
  return x;
}

int receptive_field(const DiscriminatorConfig& cfg) {
  int rf = 1, jump = 1;
  for (std::size_t i = 0; i <= cfg.widths.size(); ++i) {
    rf += 2 * jump;
    jump *= i < cfg.strides.size() ? cfg.strides[i] : 1;
  }
  return rf;
}

GanLosses hinge_losses(ad::Var real_logits, ad::Var fake_logits_detached, ad::Var fake_logits) {
  const ad::Var d = ad::add(ad::mean(ad::relu(ad::add_scalar(ad::scale(real_logits, -1.0), 1.0))),
                            ad::mean(ad::relu(ad::add_scalar(fake_logits_detached, 1.0))));
  return {d, ad::scale(ad::mean(fake_logits), -1.0)};
}

GanLosses gan_losses(ad::Tape& tape, ad::ParamStore& store, const DiscriminatorConfig& cfg, const ImageVar& real,
                     const ImageVar& fake) {
  if (real.width != fake.width || real.height != fake.height)
    throw ShapeError("gan_losses: real and fake images differ in size");
  const ad::Var lr = discriminate(tape, store, cfg, real);
  const ad::Var lfd = discriminate(tape, store, cfg, {ad::detach(fake.data), fake.width, fake.height});
  const ad::Var lf = discriminate(tape, store, cfg, fake);
  return hinge_losses(lr, lfd, lf);
}

}  // namespace snvs::refine
