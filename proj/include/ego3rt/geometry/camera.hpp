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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt::geometry {

using Vec3 = std::array<Real, 3>;
using Mat3 = std::array<Real, 9>;  // row-major
using Mat34 = std::array<std::array<Real, 4>, 3>;

// Normalized-image intrinsics: u, v run over [0, 1] across the image extent.
struct Intrinsics {
  Real fu = 1;
  Real fv = 1;
  Real cu = 0.5;
  Real cv = 0.5;
  Real bx = 0;  // baseline to the reference camera, meters

  void validate() const;
  Mat34 matrix() const;
};

// Ego/LIDAR frame -> camera frame (x right, y down, z forward).
struct Extrinsics {
  Mat3 rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 translation{0, 0, 0};

  static Extrinsics identity() { return {}; }
  // Camera at `position` looking along azimuth `yaw` (radians, counter-clockwise
  // from ego +x) and tilted down by `pitch` radians.
  static Extrinsics looking(Real yaw, Real pitch, const Vec3& position);

  void validate() const;
  Vec3 apply(const Vec3& p) const;
};

struct CameraModel {
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  int view = 1;  // 1-based view index within the rig
  std::size_t image_width = 64;
  std::size_t image_height = 64;
};

struct CameraRig {
  std::vector<CameraModel> cameras;

  std::size_t view_count() const { return cameras.size(); }
  void validate() const;
};

struct ImagePoint {
  Real u = 0;
  Real v = 0;
  Real depth = 0;
};

// M = M_in * M_ex as a 3 x 4 homogeneous projection.
Mat34 compose_projection(const CameraModel& camera);

// Throws ProjectionError when |z'| < 1e-9.
ImagePoint project(const CameraModel& camera, const Vec3& point);
std::optional<ImagePoint> try_project(const CameraModel& camera, const Vec3& point);

// 0 < u < 1, 0 < v < 1 and depth > 0.
bool visible(const ImagePoint& p);

// For each position, the rig positions (0-based) of the cameras that see it.
std::vector<std::vector<std::size_t>> visibility_sets(const CameraRig& rig,
                                                      std::span<const Vec3> positions);

struct SurroundRigSpec {
  std::size_t cameras = 4;
  Real horizontal_fov_deg = 100;
  Real mount_height = 1.6;
  Real pitch_deg = 20;  // tilt below the horizon
  std::size_t image_width = 64;
  std::size_t image_height = 64;
};

// Cameras evenly spaced in yaw starting at ego +x, all at the ego origin.
CameraRig make_surround_rig(const SurroundRigSpec& spec);

// Rig description file (JSON). Pixel-unit intrinsics ("units": "pixels") are
// divided by the image extents at load time.
CameraRig parse_rig(const std::string& text);
std::string format_rig(const CameraRig& rig);
CameraRig load_rig(const std::filesystem::path& path);
void save_rig(const std::filesystem::path& path, const CameraRig& rig);

}  // namespace ego3rt::geometry
