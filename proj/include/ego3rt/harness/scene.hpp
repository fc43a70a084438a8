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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ego3rt/eyes/eye_grid.hpp"
#include "ego3rt/geometry/camera.hpp"
#include "ego3rt/heads/boxes.hpp"

namespace ego3rt::harness {

// Straight painted strip on the ground: points with
// |(-sin a, cos a) . (x, y) - offset| <= half_width.
struct MapBand {
  Real angle = 0;
  Real offset = 0;
  Real half_width = 1;

  bool contains(Real x, Real y) const;
};

struct ObjectClass {
  std::string name;
  Real length = 4, width = 1.8, height = 1.5;
  std::array<Real, 3> color{0.8, 0.2, 0.1};
};

struct SceneConfig {
  geometry::SurroundRigSpec rig;
  std::vector<ObjectClass> classes;
  std::vector<std::string> elements{"drivable", "divider"};
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  Real place_min_radius = 2.5;  // object center distance from ego, meters
  Real place_max_radius = 6.5;
  Real place_max_abs = 6.5;     // |x|, |y| bound for object centers
  bool paint_map = true;
  Real road_half_width_min = 2.5;
  Real road_half_width_max = 3.5;
  Real road_offset_max = 3.0;
  Real divider_half_width = 0.75;
  eyes::BevGrid raster{96, Real(1) / 3 / 2};  // 16 m square at 1/6 m
  Real raster_r_min = 1;                       // valid annulus of the rasters
  Real raster_r_max = 8 * 1.4142135623730951;

  static SceneConfig desk();
  void validate() const;
};

struct SyntheticScene {
  std::uint64_t seed = 0;
  geometry::CameraRig rig;
  std::vector<Tensor> images;                 // per view, H x W x 3 in [0, 1]
  std::vector<heads::Box> boxes;              // zero velocity
  std::vector<std::vector<MapBand>> elements; // per map element, union of bands
  Tensor rasters;                             // S x S x E in {0, 1}
  std::vector<std::uint8_t> raster_valid;     // S * S
};

// Deterministic in (seed, config).
SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& config);

// Casts one ray per pixel (pixel p sits at normalized u = p / (W - 1), the
// same convention as feature sampling) against the boxes and the ground.
Tensor render_view(const geometry::CameraModel& camera, const std::vector<heads::Box>& boxes,
                   const std::vector<std::vector<MapBand>>& elements, const SceneConfig& config);

// 1 where the cell center lies inside the union of an element's bands.
Tensor rasterize_elements(const std::vector<std::vector<MapBand>>& elements, const eyes::BevGrid& grid);
// Cells whose center lies inside the box footprint (rotated rectangle).
std::vector<std::uint8_t> footprint_cells(const heads::Box& box, const eyes::BevGrid& grid);

// Directory layout: scene.json (rig, boxes, bands), view_<t>.egt per camera,
// rasters.egt, plus 8-bit view_<t>.ppm previews.
void save_scene(const std::filesystem::path& dir, const SyntheticScene& scene);
SyntheticScene load_scene(const std::filesystem::path& dir, const SceneConfig& config);

}  // namespace ego3rt::harness
