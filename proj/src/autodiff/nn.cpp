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

#include "snvs/autodiff/nn.hpp"

namespace snvs::ad {

void Linear::init(ParamStore& store, std::mt19937_64& rng, bool zero) const {
  if (zero)
    store.add_zeros(name + ".weight", {in, out});
  else
    store.add_glorot(name + ".weight", {in, out}, in, out, rng);
  store.add_zeros(name + ".bias", {1, out});
}

Var Linear::operator()(Tape& tape, ParamStore& store, Var x) const {
  return add_row(matmul(x, tape.param(store, name + ".weight")), tape.param(store, name + ".bias"));
}

void ConvLayer::init(ParamStore& store, std::mt19937_64& rng, bool zero) const {
  if (zero)
    store.add_zeros(name + ".weight", {taps, in, out});
  else
    store.add_glorot(name + ".weight", {taps, in, out}, static_cast<std::int64_t>(taps) * in,
                     static_cast<std::int64_t>(taps) * out, rng);
  store.add_zeros(name + ".bias", {1, out});
}

Var ConvLayer::operator()(Tape& tape, ParamStore& store, Var x, IndexTablePtr table) const {
  return gather_conv(x, tape.param(store, name + ".weight"), tape.param(store, name + ".bias"), std::move(table));
}

}  // namespace snvs::ad
