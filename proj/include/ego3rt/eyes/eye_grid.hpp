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

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ego3rt/geometry/camera.hpp"
#include "ego3rt/numerics/ops.hpp"
#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt::eyes {

using geometry::Vec3;

// Polar layout of imaginary eyes. Eye (i, j) sits on ring i and ray j and has
// flat index i * rays + j, so the eye features form an R x S map with the
// radial axis along rows and the angular axis along columns.
struct EyeGrid {
  std::size_t radial_count = 0;  // R, eyes per ray
  std::size_t ray_count = 0;     // S
  std::vector<Real> radii;       // R, strictly increasing, meters
  std::vector<Real> angles;      // S, in [0, 2 pi)
  Real height = 0;
  std::vector<Vec3> positions;   // R * S ego coordinates

  std::size_t eye_count() const { return radial_count * ray_count; }
  std::size_t index(std::size_t ring, std::size_t ray) const { return ring * ray_count + ray; }
  Real r_min() const { return radii.front(); }
  Real r_max() const { return radii.back(); }
};

// radius_i = r_min + i (r_max - r_min) / (R - 1), angle_j = 2 pi j / S.
EyeGrid build_eye_grid(std::size_t radial_count, std::size_t ray_count, Real r_min, Real r_max,
                       Real height);

// Square ego-centered raster. Columns run along ego +x, rows along ego -y
// (row 0 is the +y edge).
struct BevGrid {
  std::size_t side = 160;
  Real cell_size = 0.5;  // meters per cell

  Real half_extent() const { return static_cast<Real>(side) * cell_size / 2; }
  std::array<Real, 2> cell_center(std::size_t row, std::size_t col) const;
  // Continuous (row, col) index of an ego point; integer values are cell centers.
  std::array<Real, 2> index_of(Real x, Real y) const;
  void validate() const;
};

struct BevSample {
  Tensor features;               // side x side x C
  std::vector<std::uint8_t> valid;  // side * side
};

// Precomputed polar -> rectangular resampling plan. Each rectangular cell
// center is converted to (radius, azimuth) and bilinearly interpolated in
// (ring index, ray index) space with the ray axis periodic. Cells outside
// [r_min, r_max] are zero with validity 0.
class BevSampler {
 public:
  BevSampler() = default;
  BevSampler(const EyeGrid& grid, const BevGrid& target);

  BevSample forward(const Tensor& eye_features) const;
  // Adjoint of forward: returns dL/d(eye features).
  Tensor backward(const Tensor& grad_bev) const;

  const std::vector<std::uint8_t>& valid() const { return valid_; }
  std::size_t side() const { return side_; }
  std::size_t eye_count() const { return eyes_; }

 private:
  std::size_t side_ = 0;
  std::size_t eyes_ = 0;
  std::vector<std::uint8_t> valid_;
  std::vector<BilinearTaps> taps_;
};

BevSample bev_sample(const Tensor& eye_features, const EyeGrid& grid, const BevGrid& target);

// 1 where r_min <= |cell center| <= r_max.
std::vector<std::uint8_t> annulus_mask(const BevGrid& grid, Real r_min, Real r_max);

}  // namespace ego3rt::eyes
