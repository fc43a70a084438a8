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

#include "ego3rt/harness/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/ops.hpp"

namespace ego3rt::harness {

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.extent(2) != 3) throw DimensionError("write_ppm: expected H x W x 3");
  std::ofstream out(path, std::ios::binary);
  out << "P6\n" << rgb.extent(1) << ' ' << rgb.extent(0) << "\n255\n";
  std::vector<char> bytes(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i)
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(rgb[i], Real(0), Real(1)) * 255)));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P6" || maxval != 255) throw IoError("not an 8-bit P6 pixmap: " + path.string());
  in.get();
  std::vector<unsigned char> bytes(w * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated pixmap: " + path.string());
  Tensor t(Shape{h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) t[i] = static_cast<Real>(bytes[i]) / 255;
  return t;
}

Tensor channel_mean(const Tensor& features) {
  if (features.rank() != 2) throw DimensionError("channel_mean: expected N x C");
  const std::size_t N = features.extent(0), C = features.extent(1);
  Tensor m(Shape{N});
  for (std::size_t n = 0; n < N; ++n) {
    Real s = 0;
    for (std::size_t c = 0; c < C; ++c) s += features[n * C + c];
    m[n] = s / static_cast<Real>(C);
  }
  return m;
}

namespace {

// Black -> red -> yellow -> white ramp.
std::array<Real, 3> ramp(Real t) {
  t = std::clamp(t, Real(0), Real(1));
  return {std::min(Real(1), 3 * t), std::clamp(3 * t - 1, Real(0), Real(1)), std::clamp(3 * t - 2, Real(0), Real(1))};
}

// Position of v on [lo, hi]; spans at rounding level count as constant.
Real unit(Real v, Real lo, Real hi) {
  const Real scale = std::max({Real(1), std::abs(lo), std::abs(hi)});
  return hi - lo > 1e-12 * scale ? (v - lo) / (hi - lo) : Real(0.5);
}

}  // namespace

Tensor heat_colors(const Tensor& scalar, std::size_t height, std::size_t width) {
  if (scalar.size() != height * width) throw DimensionError("heat_colors: size mismatch");
  Tensor img(Shape{height, width, 3});
  if (scalar.empty()) return img;
  const auto [lo, hi] = std::minmax_element(scalar.values().begin(), scalar.values().end());
  for (std::size_t i = 0; i < scalar.size(); ++i) {
    const auto c = ramp(unit(scalar[i], *lo, *hi));
    for (std::size_t k = 0; k < 3; ++k) img[i * 3 + k] = c[k];
  }
  return img;
}

Tensor polar_heat(const Tensor& eye_features, const eyes::EyeGrid& grid) {
  require_shape(eye_features, Shape{grid.eye_count(), eye_features.extent(1)}, "polar_heat features");
  return heat_colors(channel_mean(eye_features), grid.radial_count, grid.ray_count);
}

Tensor rect_heat(const Tensor& eye_features, const eyes::EyeGrid& grid, const eyes::BevGrid& bev) {
  const Tensor mean = channel_mean(eye_features).reshaped(Shape{grid.eye_count(), 1});
  const eyes::BevSample s = eyes::bev_sample(mean, grid, bev);
  // Normalize over valid cells only so the black outside does not skew the ramp.
  Real lo = 0, hi = 0;
  bool any = false;
  for (std::size_t i = 0; i < s.valid.size(); ++i) {
    if (!s.valid[i]) continue;
    lo = any ? std::min(lo, s.features[i]) : s.features[i];
    hi = any ? std::max(hi, s.features[i]) : s.features[i];
    any = true;
  }
  Tensor img(Shape{bev.side, bev.side, 3});
  for (std::size_t i = 0; i < s.valid.size(); ++i) {
    if (!s.valid[i]) continue;
    const auto c = ramp(unit(s.features[i], lo, hi));
    for (std::size_t k = 0; k < 3; ++k) img[i * 3 + k] = c[k];
  }
  return img;
}

Tensor mask_overlay(const Tensor& logits, const Tensor& rasters, const std::vector<std::uint8_t>& valid,
                    std::size_t element) {
  require_shape(rasters, logits.shape(), "mask_overlay rasters");
  const std::size_t S = logits.extent(0), E = logits.extent(2);
  if (element >= E) throw DimensionError("mask_overlay: element out of range");
  if (valid.size() != S * logits.extent(1)) throw DimensionError("mask_overlay: mask size mismatch");
  Tensor img(Shape{S, logits.extent(1), 3});
  for (std::size_t i = 0; i < valid.size(); ++i) {
    std::array<Real, 3> c{0, 0, 0.25};
    if (valid[i]) {
      const bool p = logits[i * E + element] > 0;
      const bool g = rasters[i * E + element] > Real(0.5);
      c = p && g ? std::array<Real, 3>{0.8, 0.8, 0.8}
          : g    ? std::array<Real, 3>{0.1, 0.8, 0.1}
          : p    ? std::array<Real, 3>{0.9, 0.1, 0.1}
                 : std::array<Real, 3>{0, 0, 0};
    }
    for (std::size_t k = 0; k < 3; ++k) img[i * 3 + k] = c[k];
  }
  return img;
}

namespace {

void draw_box(Tensor& img, const eyes::BevGrid& grid, std::size_t scale, const heads::Box& b,
              const std::array<Real, 3>& color) {
  const long n = static_cast<long>(img.extent(0));
  const Real c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Real corners[4][2] = {{1, 1}, {1, -1}, {-1, -1}, {-1, 1}};
  for (int e = 0; e < 4; ++e) {
    const auto* p = corners[e];
    const auto* q = corners[(e + 1) % 4];
    const int steps = static_cast<int>(4 * scale * grid.side);
    for (int k = 0; k <= steps; ++k) {
      const Real f = static_cast<Real>(k) / steps;
      const Real a = (p[0] + f * (q[0] - p[0])) * b.l / 2, w = (p[1] + f * (q[1] - p[1])) * b.w / 2;
      const auto idx = grid.index_of(b.x + c * a - s * w, b.y + s * a + c * w);
      const long row = std::lround((idx[0] + Real(0.5)) * static_cast<Real>(scale) - Real(0.5));
      const long col = std::lround((idx[1] + Real(0.5)) * static_cast<Real>(scale) - Real(0.5));
      if (row < 0 || col < 0 || row >= n || col >= n) continue;
      for (std::size_t ch = 0; ch < 3; ++ch)
        img.at({static_cast<std::size_t>(row), static_cast<std::size_t>(col), ch}) = color[ch];
    }
  }
}

}  // namespace

Tensor box_canvas(const eyes::BevGrid& grid, std::size_t scale, const std::vector<heads::Box>& truth,
                  const std::vector<heads::Box>& predictions) {
  if (scale == 0) throw ConfigError("box_canvas: scale must be positive");
  const std::size_t n = grid.side * scale;
  Tensor img(Shape{n, n, 3});
  for (const auto& b : truth) draw_box(img, grid, scale, b, {0.1, 0.9, 0.1});
  for (const auto& b : predictions) draw_box(img, grid, scale, b, {0.95, 0.15, 0.1});
  return img;
}

}  // namespace ego3rt::harness
