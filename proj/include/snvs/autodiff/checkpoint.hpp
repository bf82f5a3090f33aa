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
#include <filesystem>
#include <string>
#include <vector>

#include "snvs/autodiff/param_store.hpp"

namespace snvs::ad {

/// Binary tensor container:
///   "CNVS" | u32 version |
///   per tensor: u32 name_len | name bytes | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
/// All integers and floats little-endian; tensors in name order; ends at EOF.
inline constexpr char kCheckpointMagic[4] = {'C', 'N', 'V', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_store(const ParamStore& store);
/// Throws IoError on a bad magic, unknown version, or truncated record.
ParamStore deserialize_store(const std::vector<std::uint8_t>& bytes);

void save_store(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_store(const std::filesystem::path& path);

}  // namespace snvs::ad
