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
#include <cmath>

#include "ego3rt/geometry/camera.hpp"
#include "ego3rt/numerics/rng.hpp"

namespace ego3rt::testing {

// Rotation from a normalized random quaternion.
inline geometry::Extrinsics random_pose(Rng& rng) {
  std::array<double, 4> q{};
  double n = 0;
  for (auto& c : q) {
    c = rng.normal();
    n += c * c;
  }
  n = std::sqrt(n);
  for (auto& c : q) c /= n;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  geometry::Extrinsics e;
  e.rotation = {1 - 2 * (y * y + z * z), 2 * (x * y - w * z),     2 * (x * z + w * y),
                2 * (x * y + w * z),     1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                2 * (x * z - w * y),     2 * (y * z + w * x),     1 - 2 * (x * x + y * y)};
  for (auto& t : e.translation) t = rng.uniform(-3, 3);
  return e;
}

// Dense 4 x 4 homogeneous extrinsic, then the 3 x 4 intrinsic, then divide.
inline std::array<double, 3> homogeneous_projection(const geometry::CameraModel& cam,
                                                    const geometry::Vec3& p) {
  const auto& r = cam.extrinsics.rotation;
  const auto& t = cam.extrinsics.translation;
  const double ex[4][4] = {{r[0], r[1], r[2], t[0]},
                           {r[3], r[4], r[5], t[1]},
                           {r[6], r[7], r[8], t[2]},
                           {0, 0, 0, 1}};
  const auto& k = cam.intrinsics;
  const double in[3][4] = {{k.fu, 0, k.cu, -k.fu * k.bx}, {0, k.fv, k.cv, 0}, {0, 0, 1, 0}};
  const double ph[4] = {p[0], p[1], p[2], 1};
  double pc[4] = {0, 0, 0, 0};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) pc[i] += ex[i][j] * ph[j];
  double img[3] = {0, 0, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) img[i] += in[i][j] * pc[j];
  return {img[0] / img[2], img[1] / img[2], pc[2]};
}

}  // namespace ego3rt::testing
