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

#include "ego3rt/heads/boxes.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "ego3rt/errors.hpp"

namespace ego3rt::heads {

void Box::validate() const {
  if (!(l > 0 && w > 0 && h > 0)) throw DomainError("box: sizes must be positive");
  for (Real v : {x, y, z, yaw, vx, vy, score}) {
    if (!std::isfinite(v)) throw DomainError("box: non-finite field");
  }
}

TaskGroups TaskGroups::one_per_class(std::size_t classes) {
  TaskGroups t;
  for (std::size_t c = 0; c < classes; ++c) t.groups.push_back({c});
  return t;
}

std::size_t TaskGroups::class_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

std::vector<std::size_t> TaskGroups::classes_per_group() const {
  std::vector<std::size_t> n;
  for (const auto& g : groups) n.push_back(g.size());
  return n;
}

std::pair<std::size_t, std::size_t> TaskGroups::locate(std::size_t cls) const {
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t i = 0; i < groups[g].size(); ++i)
      if (groups[g][i] == cls) return {g, i};
  throw ConfigError("task groups: class " + std::to_string(cls) + " is not assigned to a group");
}

void TaskGroups::validate() const {
  const std::size_t n = class_count();
  if (n == 0) throw ConfigError("task groups: no classes");
  std::vector<int> seen(n, 0);
  for (const auto& g : groups) {
    if (g.empty()) throw ConfigError("task groups: empty group");
    for (std::size_t c : g) {
      if (c >= n || seen[c]++) throw ConfigError("task groups: class ids must be 0..n-1, each once");
    }
  }
}

std::array<Real, kRegressionChannels> encode_box(const Box& box, const eyes::BevGrid& grid,
                                                 std::size_t row, std::size_t col) {
  const auto [cx, cy] = grid.cell_center(row, col);
  std::array<Real, kRegressionChannels> r{};
  r[kOffsetX] = (box.x - cx) / grid.cell_size;
  r[kOffsetY] = (box.y - cy) / grid.cell_size;
  r[kHeight] = box.z;
  r[kLogLength] = std::log(box.l);
  r[kLogHeight] = std::log(box.h);
  r[kLogWidth] = std::log(box.w);
  r[kSinYaw] = std::sin(box.yaw);
  r[kCosYaw] = std::cos(box.yaw);
  r[kVelX] = box.vx;
  r[kVelY] = box.vy;
  return r;
}

Box decode_box(std::span<const Real> r, const eyes::BevGrid& grid, std::size_t row, std::size_t col) {
  const auto [cx, cy] = grid.cell_center(row, col);
  Box b;
  b.x = cx + r[kOffsetX] * grid.cell_size;
  b.y = cy + r[kOffsetY] * grid.cell_size;
  b.z = r[kHeight];
  b.l = std::exp(r[kLogLength]);
  b.h = std::exp(r[kLogHeight]);
  b.w = std::exp(r[kLogWidth]);
  b.yaw = std::atan2(r[kSinYaw], r[kCosYaw]);
  b.vx = r[kVelX];
  b.vy = r[kVelY];
  return b;
}

DetectionTargets build_detection_targets(const std::vector<Box>& boxes, const eyes::BevGrid& grid,
                                         const TaskGroups& groups, Real sigma) {
  const std::size_t S = grid.side;
  DetectionTargets t;
  for (std::size_t n : groups.classes_per_group()) t.heat.emplace_back(Shape{S, S, n});
  t.objects.resize(groups.groups.size());
  const long radius = static_cast<long>(std::ceil(3 * sigma));
  for (const Box& b : boxes) {
    const auto [g, ch] = groups.locate(b.cls);
    const auto [fr, fc] = grid.index_of(b.x, b.y);
    const long pr = std::lround(fr), pc = std::lround(fc);
    if (pr < 0 || pc < 0 || pr >= static_cast<long>(S) || pc >= static_cast<long>(S)) continue;
    Tensor& heat = t.heat[g];
    const std::size_t C = heat.extent(2);
    for (long r = std::max(0L, pr - radius); r <= std::min(static_cast<long>(S) - 1, pr + radius); ++r)
      for (long c = std::max(0L, pc - radius); c <= std::min(static_cast<long>(S) - 1, pc + radius); ++c) {
        const Real d2 = static_cast<Real>((r - pr) * (r - pr) + (c - pc) * (c - pc));
        Real& cell = heat[(static_cast<std::size_t>(r) * S + static_cast<std::size_t>(c)) * C + ch];
        cell = std::max(cell, std::exp(-d2 / (2 * sigma * sigma)));
      }
    const auto row = static_cast<std::size_t>(pr), col = static_cast<std::size_t>(pc);
    t.objects[g].push_back({row, col, encode_box(b, grid, row, col)});
  }
  return t;
}

std::vector<Box> decode_detections(const DetectionOutput& out, const eyes::BevGrid& grid,
                                   const TaskGroups& groups, Real threshold, std::size_t scene) {
  std::vector<Box> boxes;
  for (std::size_t g = 0; g < out.heat_logits.size(); ++g) {
    const Tensor p = heatmap(out.heat_logits[g]);
    const std::size_t H = p.extent(0), W = p.extent(1), C = p.extent(2);
    const Tensor& reg = out.regression[g];
    for (std::size_t ch = 0; ch < C; ++ch)
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < W; ++c) {
          const Real v = p[(r * W + c) * C + ch];
          if (v < threshold) continue;
          bool peak = true;
          for (long dr = -1; dr <= 1 && peak; ++dr)
            for (long dc = -1; dc <= 1 && peak; ++dc) {
              const long rr = static_cast<long>(r) + dr, cc = static_cast<long>(c) + dc;
              if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= static_cast<long>(H) ||
                  cc >= static_cast<long>(W))
                continue;
              const Real n = p[(static_cast<std::size_t>(rr) * W + static_cast<std::size_t>(cc)) * C + ch];
              const bool earlier = dr < 0 || (dr == 0 && dc < 0);
              if (n > v || (earlier && n == v)) peak = false;
            }
          if (!peak) continue;
          const Real* rv = reg.data() + (r * W + c) * kRegressionChannels;
          Box b = decode_box(std::span<const Real>(rv, kRegressionChannels), grid, r, c);
          b.cls = groups.groups[g][ch];
          b.scene = scene;
          b.score = v;
          boxes.push_back(b);
        }
  }
  return boxes;
}

void write_boxes(std::ostream& out, const std::vector<Box>& boxes) {
  const auto old = out.precision(9);
  for (const Box& b : boxes) {
    out << b.cls << ' ' << b.score << ' ' << b.x << ' ' << b.y << ' ' << b.z << ' ' << b.l << ' '
        << b.w << ' ' << b.h << ' ' << b.yaw << ' ' << b.vx << ' ' << b.vy << '\n';
  }
  out.precision(old);
}

std::vector<Box> read_boxes(std::istream& in) {
  std::vector<Box> boxes;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Box b;
    if (!(ls >> b.cls >> b.score >> b.x >> b.y >> b.z >> b.l >> b.w >> b.h >> b.yaw >> b.vx >> b.vy)) {
      throw ConfigError("box record: cannot parse '" + line + "'");
    }
    boxes.push_back(b);
  }
  return boxes;
}

}  // namespace ego3rt::heads
