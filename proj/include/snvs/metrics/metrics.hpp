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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "snvs/core/image.hpp"

namespace snvs::metrics {

inline constexpr double kPsnrSentinel = 99.0;

/// 10 log10(1 / MSE) over all channels; 99 dB when MSE is zero.
double psnr(const Image& pred, const Image& gt);
/// Same over the pixels set in `mask`; nullopt when the mask is empty.
std::optional<double> psnr(const Image& pred, const Image& gt, const Mask& mask);

/// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), averaged over channels.
double ssim(const Image& pred, const Image& gt);
/// Windows centred on mask pixels, with off-mask pixels weighted out of the window statistics.
/// nullopt when no valid window is centred on the mask.
std::optional<double> ssim(const Image& pred, const Image& gt, const Mask& mask);

struct DepthScores {
  double rmse = 0.0;
  double delta125 = 0.0;
};
/// Over pixels in `valid`; pixels where either depth is not positive fail the ratio test.
DepthScores depth_metrics(const Image& pred, const Image& gt, const Mask& valid);

Mask full_mask(int width, int height);
/// Pixels with positive depth.
Mask valid_depth(const Image& depth);
Mask intersect(const Mask& a, const Mask& b);

struct Scores {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<DepthScores> depth;
};

struct ImageEval {
  std::string name;
  Scores full;
  std::optional<Scores> unobserved;  // absent for an empty mask
};

/// Every metric on the full frame and restricted to `mask`. Depth images are optional (empty).
ImageEval masked_eval(const std::string& name, const Image& pred_rgb, const Image& gt_rgb, const Mask& mask,
                      const Image& pred_depth = {}, const Image& gt_depth = {});

struct EvalReport {
  std::vector<ImageEval> images;

  /// Means over images; unobserved means over images where present.
  Scores mean_full() const;
  std::optional<Scores> mean_unobserved() const;
  /// One line per image plus a MEAN line, tab separated, fixed precision.
  std::string to_tsv() const;
  /// Aligned table: rows are metrics, columns full frame / unobserved.
  std::string summary() const;
};

}  // namespace snvs::metrics
