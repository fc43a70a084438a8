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
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ego3rt/eyes/eye_grid.hpp"
#include "ego3rt/heads/heads.hpp"

namespace ego3rt::heads {

// A 3D box in the ego frame. Yaw is counter-clockwise from ego +x; l runs
// along the heading, w across it.
struct Box {
  std::size_t cls = 0;
  std::size_t scene = 0;
  Real score = 1;
  Real x = 0, y = 0, z = 0;
  Real l = 1, w = 1, h = 1;
  Real yaw = 0;
  Real vx = 0, vy = 0;

  void validate() const;
};

// Sub-task grouping: groups[g] lists the class ids predicted by head group g.
struct TaskGroups {
  std::vector<std::vector<std::size_t>> groups;

  // One group per class.
  static TaskGroups one_per_class(std::size_t classes);

  std::size_t class_count() const;
  std::vector<std::size_t> classes_per_group() const;
  // (group, channel within the group) of a class id.
  std::pair<std::size_t, std::size_t> locate(std::size_t cls) const;
  // Every class id 0..n-1 appears exactly once.
  void validate() const;
};

struct ObjectTarget {
  std::size_t row = 0, col = 0;
  std::array<Real, kRegressionChannels> regression{};
};

struct DetectionTargets {
  std::vector<Tensor> heat;                         // per group: side x side x classes
  std::vector<std::vector<ObjectTarget>> objects;   // per group
};

// Gaussian peaks (sigma in cells, truncated at 3 sigma) centered on the cell
// holding each box center; peak value exactly 1. Boxes whose center cell lies
// outside the grid are skipped.
DetectionTargets build_detection_targets(const std::vector<Box>& boxes, const eyes::BevGrid& grid,
                                         const TaskGroups& groups, Real sigma = 1);

// Regression vector of a box relative to cell (row, col).
std::array<Real, kRegressionChannels> encode_box(const Box& box, const eyes::BevGrid& grid,
                                                 std::size_t row, std::size_t col);
Box decode_box(std::span<const Real> regression, const eyes::BevGrid& grid, std::size_t row,
               std::size_t col);

// Heatmap peaks: cells at or above `threshold` that are maximal over their 3x3
// neighborhood (ties resolved toward the earlier cell in row-major order).
std::vector<Box> decode_detections(const DetectionOutput& out, const eyes::BevGrid& grid,
                                   const TaskGroups& groups, Real threshold, std::size_t scene = 0);

// Line-delimited prediction records: class score x y z l w h yaw vx vy.
void write_boxes(std::ostream& out, const std::vector<Box>& boxes);
std::vector<Box> read_boxes(std::istream& in);

}  // namespace ego3rt::heads
