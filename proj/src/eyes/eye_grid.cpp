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

#include "ego3rt/eyes/eye_grid.hpp"

#include <cmath>
#include <numbers>

#include "ego3rt/errors.hpp"

namespace ego3rt::eyes {

EyeGrid build_eye_grid(std::size_t radial_count, std::size_t ray_count, Real r_min, Real r_max,
                       Real height) {
  if (radial_count < 1 || ray_count < 1) throw DomainError("eye grid: R and S must be >= 1");
  if (!(r_min > 0) || !(r_min < r_max)) throw DomainError("eye grid: need 0 < r_min < r_max");
  if (!std::isfinite(height)) throw DomainError("eye grid: height must be finite");
  EyeGrid g;
  g.radial_count = radial_count;
  g.ray_count = ray_count;
  g.height = height;
  g.radii.resize(radial_count);
  for (std::size_t i = 0; i < radial_count; ++i) {
    g.radii[i] = radial_count == 1
                     ? r_min
                     : r_min + static_cast<Real>(i) * (r_max - r_min) /
                                   static_cast<Real>(radial_count - 1);
  }
  g.angles.resize(ray_count);
  for (std::size_t j = 0; j < ray_count; ++j) {
    g.angles[j] = 2 * std::numbers::pi_v<Real> * static_cast<Real>(j) / static_cast<Real>(ray_count);
  }
  g.positions.resize(g.eye_count());
  for (std::size_t i = 0; i < radial_count; ++i) {
    for (std::size_t j = 0; j < ray_count; ++j) {
      g.positions[g.index(i, j)] = {g.radii[i] * std::cos(g.angles[j]),
                                    g.radii[i] * std::sin(g.angles[j]), height};
    }
  }
  return g;
}

std::array<Real, 2> BevGrid::cell_center(std::size_t row, std::size_t col) const {
  const Real half = static_cast<Real>(side) / 2;
  return {(static_cast<Real>(col) + Real(0.5) - half) * cell_size,
          (half - static_cast<Real>(row) - Real(0.5)) * cell_size};
}

std::array<Real, 2> BevGrid::index_of(Real x, Real y) const {
  const Real half = static_cast<Real>(side) / 2;
  return {half - Real(0.5) - y / cell_size, x / cell_size + half - Real(0.5)};
}

void BevGrid::validate() const {
  if (side == 0 || !(cell_size > 0)) throw ConfigError("BEV grid: side and cell size must be positive");
}

BevSampler::BevSampler(const EyeGrid& grid, const BevGrid& target)
    : side_(target.side), eyes_(grid.eye_count()) {
  target.validate();
  const std::size_t cells = side_ * side_;
  valid_ = annulus_mask(target, grid.r_min(), grid.r_max());
  taps_.resize(cells);
  const Real r_min = grid.r_min();
  const Real r_max = grid.r_max();
  const Real ring_scale = grid.radial_count > 1
                              ? static_cast<Real>(grid.radial_count - 1) / (r_max - r_min)
                              : Real(0);
  const Real ray_scale = static_cast<Real>(grid.ray_count) / (2 * std::numbers::pi_v<Real>);
  for (std::size_t row = 0; row < side_; ++row) {
    for (std::size_t col = 0; col < side_; ++col) {
      const std::size_t cell = row * side_ + col;
      if (!valid_[cell]) continue;
      const auto [x, y] = target.cell_center(row, col);
      const Real radius = std::hypot(x, y);
      Real azimuth = std::atan2(y, x);
      if (azimuth < 0) azimuth += 2 * std::numbers::pi_v<Real>;
      taps_[cell] = bilinear_taps(azimuth * ray_scale, (radius - r_min) * ring_scale,
                                  grid.radial_count, grid.ray_count, AxisMode::kWrap,
                                  AxisMode::kClamp);
    }
  }
}

BevSample BevSampler::forward(const Tensor& eye_features) const {
  if (eye_features.rank() != 2 || eye_features.extent(0) != eyes_) {
    throw DimensionError("bev_sample: eye features must be N_eyes x C, got " +
                         shape_string(eye_features.shape()));
  }
  const std::size_t channels = eye_features.extent(1);
  const MapView view{eye_features.data(), eyes_, 1, channels};
  BevSample out{Tensor(Shape{side_, side_, channels}), valid_};
  for (std::size_t cell = 0; cell < side_ * side_; ++cell) {
    if (!valid_[cell]) continue;
    gather_taps(view, taps_[cell], 0, out.features.row(0).subspan(cell * channels, channels));
  }
  return out;
}

Tensor BevSampler::backward(const Tensor& grad_bev) const {
  const std::size_t channels = grad_bev.extent(2);
  Tensor grad(Shape{eyes_, channels});
  for (std::size_t cell = 0; cell < side_ * side_; ++cell) {
    if (!valid_[cell]) continue;
    scatter_taps(taps_[cell], grad_bev.values().subspan(cell * channels, channels), channels, 0,
                 grad.data());
  }
  return grad;
}

BevSample bev_sample(const Tensor& eye_features, const EyeGrid& grid, const BevGrid& target) {
  return BevSampler(grid, target).forward(eye_features);
}

std::vector<std::uint8_t> annulus_mask(const BevGrid& grid, Real r_min, Real r_max) {
  std::vector<std::uint8_t> mask(grid.side * grid.side, 0);
  for (std::size_t row = 0; row < grid.side; ++row) {
    for (std::size_t col = 0; col < grid.side; ++col) {
      const auto [x, y] = grid.cell_center(row, col);
      const Real radius = std::hypot(x, y);
      mask[row * grid.side + col] = (radius >= r_min && radius <= r_max) ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace ego3rt::eyes
