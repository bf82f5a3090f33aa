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

#include <cstdint>
#include <random>
#include <string>

#include "snvs/autodiff/ops.hpp"

namespace snvs::ad {

/// Fully connected layer: parameters "<name>.weight" (in x out) and "<name>.bias" (1 x out).
struct Linear {
  std::string name;
  int in = 0;
  int out = 0;

  /// Glorot-uniform weights and zero bias; `zero` zeroes the weights as well.
  void init(ParamStore& store, std::mt19937_64& rng, bool zero = false) const;
  Var operator()(Tape& tape, ParamStore& store, Var x) const;
};

/// Table-driven convolution: "<name>.weight" (taps x in x out) and "<name>.bias" (1 x out).
struct ConvLayer {
  std::string name;
  int taps = 27;
  int in = 0;
  int out = 0;

  void init(ParamStore& store, std::mt19937_64& rng, bool zero = false) const;
  Var operator()(Tape& tape, ParamStore& store, Var x, IndexTablePtr table) const;
};

}  // namespace snvs::ad
