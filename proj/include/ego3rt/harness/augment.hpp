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

#include "ego3rt/eyes/eye_grid.hpp"
#include "ego3rt/heads/boxes.hpp"

namespace ego3rt::harness {

struct AugmentConfig {
  bool hflip = false;   // x -> -x
  bool vflip = false;   // y -> -y
  bool rotate = false;
  bool scale = false;
  Real probability = 0.5;  // per enabled switch
  Real max_rotation_deg = 22.5;
  Real scale_min = 0.95;
  Real scale_max = 1.05;

  bool any() const { return hflip || vflip || rotate || scale; }
  void validate() const;
};

// p' = scale * Rot(rotation) * Flip * p on ego (x, y).
struct BevTransform {
  bool flip_x = false;
  bool flip_y = false;
  Real rotation = 0;  // radians, counter-clockwise
  Real scale = 1;

  static BevTransform sample(const AugmentConfig& config, std::uint64_t seed);

  bool is_identity() const { return !flip_x && !flip_y && rotation == 0 && scale == 1; }
  std::array<Real, 2> apply(Real x, Real y) const;
  std::array<Real, 2> inverse(Real x, Real y) const;
  // Center, yaw, sizes (and z) and velocity follow the same similarity.
  heads::Box apply(const heads::Box& box) const;
};

// Resamples a square H x W x C BEV map under a transform: each output cell
// center is pulled back through the inverse and read bilinearly, with zero
// outside the map. Pull-backs within 1e-9 of a cell center read that cell
// exactly, so flips are permutations.
class BevWarp {
 public:
  BevWarp() = default;
  BevWarp(const BevTransform& transform, const eyes::BevGrid& grid);

  Tensor forward(const Tensor& map) const;
  Tensor backward(const Tensor& grad) const;
  // Output cells whose four taps all land on valid input cells.
  std::vector<std::uint8_t> warp_mask(const std::vector<std::uint8_t>& valid) const;

  std::size_t side() const { return side_; }

 private:
  struct Tap {
    std::array<std::size_t, 4> cell{};
    std::array<Real, 4> weight{};  // zero for taps off the map
    std::array<Real, 4> raw{};
  };
  std::size_t side_ = 0;
  std::vector<Tap> taps_;
};

struct AugmentedBoxes {
  std::vector<heads::Box> boxes;
  std::vector<std::uint8_t> cropped;  // center left the grid extent
};

AugmentedBoxes augment_boxes(const std::vector<heads::Box>& boxes, const BevTransform& transform,
                             const eyes::BevGrid& grid);

struct AugmentedPair {
  Tensor map;
  AugmentedBoxes boxes;
};

// Same transform on a map and its boxes.
AugmentedPair bev_augment(const Tensor& map, const std::vector<heads::Box>& boxes, const eyes::BevGrid& grid,
                          const BevTransform& transform);
AugmentedPair bev_augment(const Tensor& map, const std::vector<heads::Box>& boxes, const eyes::BevGrid& grid,
                          const AugmentConfig& config, std::uint64_t seed);

}  // namespace ego3rt::harness
