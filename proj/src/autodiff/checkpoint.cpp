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

#include "snvs/autodiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace snvs::ad {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  bool done() const { return pos_ == bytes_.size(); }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint: truncated record");
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_store(const ParamStore& store) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& [name, p] : store.entries()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    for (double v : p.value.values()) put<double>(out, v);
  }
  return out;
}

ParamStore deserialize_store(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.get_string(4) != std::string(kCheckpointMagic, 4)) throw IoError("checkpoint: bad magic");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  ParamStore store;
  while (!in.done()) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name = in.get_string(name_len);
    const auto rank = in.get<std::uint32_t>();
    std::vector<std::int64_t> shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = in.get<std::uint64_t>();
      shape.push_back(static_cast<std::int64_t>(d));
      count *= d;
    }
    in.need(count * sizeof(double));
    std::vector<double> values(count);
    for (auto& v : values) v = in.get<double>();
    store.add(name, std::move(shape), std::move(values));
  }
  return store;
}

void save_store(const ParamStore& store, const std::filesystem::path& path) {
  const auto bytes = serialize_store(store);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("checkpoint: write failed for " + path.string());
}

ParamStore load_store(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_store(bytes);
}

}  // namespace snvs::ad
