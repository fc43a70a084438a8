// Copyright 2026 The ego3rt Authors
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

#include "ego3rt/numerics/egt_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

#include "ego3rt/errors.hpp"

namespace ego3rt {

namespace {

constexpr std::array<char, 4> kMagic{'E', 'G', 'T', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &v, sizeof(T));
    std::reverse(bytes.begin(), bytes.end());
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IoError("EGT1: truncated header");
  return to_little(v);
}

}  // namespace

void write_egt(std::ostream& out, const Tensor& tensor) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (auto e : tensor.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw IoError("EGT1: extent too large");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    const double v = to_little(static_cast<double>(tensor[i]));
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  if (!out) throw IoError("EGT1: write failed");
}

Tensor read_egt(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw IoError("EGT1: bad magic");
  }
  const std::uint32_t rank = get_u32(in);
  if (rank > 16) throw IoError("EGT1: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = get_u32(in);
  std::vector<Real> data(shape_size(shape));
  for (auto& v : data) {
    double d = 0;
    if (!in.read(reinterpret_cast<char*>(&d), sizeof d)) throw IoError("EGT1: truncated payload");
    v = static_cast<Real>(to_little(d));
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_egt(const std::filesystem::path& path, const Tensor& tensor) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_egt(out, tensor);
}

Tensor load_egt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_egt(in);
}

}  // namespace ego3rt
