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

#include "ego3rt/harness/augment.hpp"

#include <cmath>
#include <numbers>

#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/rng.hpp"

namespace ego3rt::harness {

void AugmentConfig::validate() const {
  if (!(probability >= 0 && probability <= 1)) throw ConfigError("augment: probability must be in [0, 1]");
  if (!(max_rotation_deg >= 0)) throw ConfigError("augment: max_rotation_deg must be >= 0");
  if (!(scale_min > 0 && scale_max >= scale_min)) throw ConfigError("augment: bad scale range");
}

BevTransform BevTransform::sample(const AugmentConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0xa06));
  BevTransform t;
  // Every draw happens regardless of the switches so enabling one switch does
  // not shift the others' random streams.
  const bool h = rng.bernoulli(config.probability);
  const bool v = rng.bernoulli(config.probability);
  const bool r = rng.bernoulli(config.probability);
  const Real angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg) * std::numbers::pi_v<Real> / 180;
  const bool s = rng.bernoulli(config.probability);
  const Real factor = rng.uniform(config.scale_min, config.scale_max);
  t.flip_x = config.hflip && h;
  t.flip_y = config.vflip && v;
  if (config.rotate && r) t.rotation = angle;
  if (config.scale && s) t.scale = factor;
  return t;
}

std::array<Real, 2> BevTransform::apply(Real x, Real y) const {
  if (flip_x) x = -x;
  if (flip_y) y = -y;
  const Real c = std::cos(rotation), s = std::sin(rotation);
  return {scale * (c * x - s * y), scale * (s * x + c * y)};
}

std::array<Real, 2> BevTransform::inverse(Real x, Real y) const {
  const Real c = std::cos(rotation), s = std::sin(rotation);
  Real px = (c * x + s * y) / scale, py = (-s * x + c * y) / scale;
  if (flip_x) px = -px;
  if (flip_y) py = -py;
  return {px, py};
}

heads::Box BevTransform::apply(const heads::Box& box) const {
  heads::Box b = box;
  const auto p = apply(box.x, box.y);
  b.x = p[0];
  b.y = p[1];
  Real yaw = box.yaw;
  if (flip_x) yaw = std::numbers::pi_v<Real> - yaw;
  if (flip_y) yaw = -yaw;
  b.yaw = std::remainder(yaw + rotation, 2 * std::numbers::pi_v<Real>);
  b.l *= scale;
  b.w *= scale;
  b.h *= scale;
  b.z *= scale;
  Real vx = box.vx, vy = box.vy;
  if (flip_x) vx = -vx;
  if (flip_y) vy = -vy;
  const Real c = std::cos(rotation), s = std::sin(rotation);
  b.vx = scale * (c * vx - s * vy);
  b.vy = scale * (s * vx + c * vy);
  return b;
}

namespace {

constexpr std::size_t kOutside = static_cast<std::size_t>(-1);

Real snap(Real v) {
  const Real r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

}  // namespace

BevWarp::BevWarp(const BevTransform& transform, const eyes::BevGrid& grid) : side_(grid.side) {
  grid.validate();
  const long n = static_cast<long>(side_);
  taps_.resize(side_ * side_);
  for (std::size_t r = 0; r < side_; ++r)
    for (std::size_t c = 0; c < side_; ++c) {
      const auto [x, y] = grid.cell_center(r, c);
      const auto src = transform.inverse(x, y);
      const auto idx = grid.index_of(src[0], src[1]);
      const Real fy = snap(idx[0]), fx = snap(idx[1]);
      const long y0 = static_cast<long>(std::floor(fy)), x0 = static_cast<long>(std::floor(fx));
      const Real ty = fy - static_cast<Real>(y0), tx = fx - static_cast<Real>(x0);
      Tap& tap = taps_[r * side_ + c];
      const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
      const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const Real ws[4] = {(1 - ty) * (1 - tx), (1 - ty) * tx, ty * (1 - tx), ty * tx};
      for (int k = 0; k < 4; ++k) {
        const bool inside = ys[k] >= 0 && xs[k] >= 0 && ys[k] < n && xs[k] < n;
        tap.raw[k] = ws[k];
        tap.weight[k] = inside ? ws[k] : 0;
        tap.cell[k] = inside ? static_cast<std::size_t>(ys[k] * n + xs[k]) : kOutside;
      }
    }
}

Tensor BevWarp::forward(const Tensor& map) const {
  if (map.rank() != 3 || map.extent(0) != side_ || map.extent(1) != side_)
    throw DimensionError("BevWarp: expected a " + std::to_string(side_) + "^2 x C map, got " + shape_string(map.shape()));
  const std::size_t C = map.extent(2);
  Tensor out(map.shape());
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    const Tap& tap = taps_[i];
    Real* dst = out.data() + i * C;
    for (int k = 0; k < 4; ++k) {
      if (tap.weight[k] == 0) continue;
      const Real* src = map.data() + tap.cell[k] * C;
      for (std::size_t ch = 0; ch < C; ++ch) dst[ch] += tap.weight[k] * src[ch];
    }
  }
  return out;
}

Tensor BevWarp::backward(const Tensor& grad) const {
  require_shape(grad, Shape{side_, side_, grad.extent(2)}, "BevWarp grad");
  const std::size_t C = grad.extent(2);
  Tensor out(grad.shape());
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    const Tap& tap = taps_[i];
    const Real* g = grad.data() + i * C;
    for (int k = 0; k < 4; ++k) {
      if (tap.weight[k] == 0) continue;
      Real* dst = out.data() + tap.cell[k] * C;
      for (std::size_t ch = 0; ch < C; ++ch) dst[ch] += tap.weight[k] * g[ch];
    }
  }
  return out;
}

std::vector<std::uint8_t> BevWarp::warp_mask(const std::vector<std::uint8_t>& valid) const {
  if (valid.size() != taps_.size()) throw DimensionError("BevWarp: mask size mismatch");
  std::vector<std::uint8_t> out(taps_.size(), 0);
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    const Tap& tap = taps_[i];
    bool ok = true;
    for (int k = 0; k < 4; ++k)
      if (tap.raw[k] != 0 && (tap.cell[k] == kOutside || !valid[tap.cell[k]])) ok = false;
    out[i] = ok;
  }
  return out;
}

AugmentedBoxes augment_boxes(const std::vector<heads::Box>& boxes, const BevTransform& transform,
                             const eyes::BevGrid& grid) {
  AugmentedBoxes out;
  const Real half = grid.half_extent();
  for (const auto& b : boxes) {
    out.boxes.push_back(transform.apply(b));
    const auto& t = out.boxes.back();
    out.cropped.push_back(!(std::abs(t.x) < half && std::abs(t.y) < half));
  }
  return out;
}

AugmentedPair bev_augment(const Tensor& map, const std::vector<heads::Box>& boxes, const eyes::BevGrid& grid,
                          const BevTransform& transform) {
  return {BevWarp(transform, grid).forward(map), augment_boxes(boxes, transform, grid)};
}

AugmentedPair bev_augment(const Tensor& map, const std::vector<heads::Box>& boxes, const eyes::BevGrid& grid,
                          const AugmentConfig& config, std::uint64_t seed) {
  return bev_augment(map, boxes, grid, BevTransform::sample(config, seed));
}

}  // namespace ego3rt::harness
