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

#include "ego3rt/geometry/camera.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ego3rt/errors.hpp"

namespace ego3rt::geometry {

namespace {

constexpr Real kSingularDepth = Real(1e-9);

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

}  // namespace

void Intrinsics::validate() const {
  if (!(fu > 0) || !(fv > 0)) throw ConfigError("intrinsics: focal lengths must be positive");
  if (!std::isfinite(cu) || !std::isfinite(cv) || !std::isfinite(bx)) {
    throw ConfigError("intrinsics: non-finite principal point or baseline");
  }
}

Mat34 Intrinsics::matrix() const {
  return {{{fu, 0, cu, -fu * bx}, {0, fv, cv, 0}, {0, 0, 1, 0}}};
}

Extrinsics Extrinsics::looking(Real yaw, Real pitch, const Vec3& position) {
  const Vec3 forward{std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw),
                     -std::sin(pitch)};
  const Vec3 right{std::sin(yaw), -std::cos(yaw), 0};
  const Vec3 down = cross(forward, right);
  Extrinsics e;
  e.rotation = {right[0], right[1], right[2], down[0], down[1],
                down[2],  forward[0], forward[1], forward[2]};
  for (int r = 0; r < 3; ++r) {
    e.translation[r] = -(e.rotation[3 * r] * position[0] + e.rotation[3 * r + 1] * position[1] +
                         e.rotation[3 * r + 2] * position[2]);
  }
  return e;
}

void Extrinsics::validate() const {
  const auto& m = rotation;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Real dot = 0;
      for (int k = 0; k < 3; ++k) dot += m[3 * i + k] * m[3 * j + k];
      if (std::abs(dot - (i == j ? 1 : 0)) > 1e-9) {
        throw ConfigError("extrinsics: rotation is not orthonormal");
      }
    }
  }
  const Real det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                   m[2] * (m[3] * m[7] - m[4] * m[6]);
  if (std::abs(det - 1) > 1e-9) throw ConfigError("extrinsics: rotation determinant is not +1");
  for (auto t : translation) {
    if (!std::isfinite(t)) throw ConfigError("extrinsics: non-finite translation");
  }
}

Vec3 Extrinsics::apply(const Vec3& p) const {
  Vec3 out;
  for (int r = 0; r < 3; ++r) {
    out[r] = rotation[3 * r] * p[0] + rotation[3 * r + 1] * p[1] + rotation[3 * r + 2] * p[2] +
             translation[r];
  }
  return out;
}

void CameraRig::validate() const {
  if (cameras.empty()) throw ConfigError("rig: at least one camera is required");
  std::set<int> views;
  for (const auto& cam : cameras) {
    cam.intrinsics.validate();
    cam.extrinsics.validate();
    if (cam.view < 1 || cam.view > static_cast<int>(cameras.size())) {
      throw ConfigError("rig: view index out of range");
    }
    if (!views.insert(cam.view).second) throw ConfigError("rig: duplicate view index");
    if (cam.image_width == 0 || cam.image_height == 0) throw ConfigError("rig: empty image extent");
  }
}

Mat34 compose_projection(const CameraModel& camera) {
  const Mat34 in = camera.intrinsics.matrix();
  const auto& r = camera.extrinsics.rotation;
  const auto& t = camera.extrinsics.translation;
  // 4 x 4 homogeneous extrinsic [R t; 0 1].
  const std::array<std::array<Real, 4>, 4> ex{{{r[0], r[1], r[2], t[0]},
                                               {r[3], r[4], r[5], t[1]},
                                               {r[6], r[7], r[8], t[2]},
                                               {0, 0, 0, 1}}};
  Mat34 m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      Real acc = 0;
      for (int k = 0; k < 4; ++k) acc += in[i][k] * ex[k][j];
      m[i][j] = acc;
    }
  }
  return m;
}

std::optional<ImagePoint> try_project(const CameraModel& camera, const Vec3& point) {
  const Vec3 c = camera.extrinsics.apply(point);
  const auto& k = camera.intrinsics;
  const Real w = c[2];
  if (!(std::abs(w) >= kSingularDepth)) return std::nullopt;
  const Real uh = k.fu * c[0] + k.cu * c[2] - k.fu * k.bx;
  const Real vh = k.fv * c[1] + k.cv * c[2];
  return ImagePoint{uh / w, vh / w, c[2]};
}

ImagePoint project(const CameraModel& camera, const Vec3& point) {
  auto p = try_project(camera, point);
  if (!p) throw ProjectionError("project: point lies on the camera plane (|z'| < 1e-9)");
  return *p;
}

bool visible(const ImagePoint& p) {
  return p.u > 0 && p.u < 1 && p.v > 0 && p.v < 1 && p.depth > 0;
}

std::vector<std::vector<std::size_t>> visibility_sets(const CameraRig& rig,
                                                      std::span<const Vec3> positions) {
  std::vector<std::vector<std::size_t>> sets(positions.size());
  for (std::size_t q = 0; q < positions.size(); ++q) {
    for (std::size_t t = 0; t < rig.cameras.size(); ++t) {
      const auto p = try_project(rig.cameras[t], positions[q]);
      if (p && visible(*p)) sets[q].push_back(t);
    }
  }
  return sets;
}

CameraRig make_surround_rig(const SurroundRigSpec& spec) {
  if (spec.cameras == 0) throw ConfigError("surround rig needs at least one camera");
  if (!(spec.horizontal_fov_deg > 0 && spec.horizontal_fov_deg < 180)) {
    throw ConfigError("surround rig: horizontal FOV must be in (0, 180) degrees");
  }
  constexpr Real deg = std::numbers::pi_v<Real> / 180;
  const Real fu = Real(0.5) / std::tan(spec.horizontal_fov_deg * deg / 2);
  const Real aspect = static_cast<Real>(spec.image_width) / static_cast<Real>(spec.image_height);
  CameraRig rig;
  for (std::size_t k = 0; k < spec.cameras; ++k) {
    CameraModel cam;
    cam.view = static_cast<int>(k + 1);
    cam.image_width = spec.image_width;
    cam.image_height = spec.image_height;
    cam.intrinsics = Intrinsics{fu, fu * aspect, 0.5, 0.5, 0};
    const Real yaw = 2 * std::numbers::pi_v<Real> * static_cast<Real>(k) /
                     static_cast<Real>(spec.cameras);
    cam.extrinsics = Extrinsics::looking(yaw, spec.pitch_deg * deg, {0, 0, spec.mount_height});
    rig.cameras.push_back(cam);
  }
  return rig;
}

CameraRig parse_rig(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rig file: ") + e.what());
  }
  CameraRig rig;
  try {
    for (const auto& c : doc.at("cameras")) {
      CameraModel cam;
      cam.view = c.at("view").get<int>();
      cam.image_width = c.at("image").at("width").get<std::size_t>();
      cam.image_height = c.at("image").at("height").get<std::size_t>();
      const auto& in = c.at("intrinsics");
      cam.intrinsics.fu = in.at("fu").get<Real>();
      cam.intrinsics.fv = in.at("fv").get<Real>();
      cam.intrinsics.cu = in.at("cu").get<Real>();
      cam.intrinsics.cv = in.at("cv").get<Real>();
      cam.intrinsics.bx = in.value("bx", Real(0));
      if (c.value("units", std::string("normalized")) == "pixels") {
        const auto w = static_cast<Real>(cam.image_width);
        const auto h = static_cast<Real>(cam.image_height);
        cam.intrinsics.fu /= w;
        cam.intrinsics.cu /= w;
        cam.intrinsics.fv /= h;
        cam.intrinsics.cv /= h;
      }
      const auto rot = c.at("rotation").get<std::vector<Real>>();
      const auto tr = c.at("translation").get<std::vector<Real>>();
      if (rot.size() != 9 || tr.size() != 3) {
        throw ConfigError("rig file: rotation needs 9 values and translation 3");
      }
      std::copy(rot.begin(), rot.end(), cam.extrinsics.rotation.begin());
      std::copy(tr.begin(), tr.end(), cam.extrinsics.translation.begin());
      rig.cameras.push_back(cam);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rig file: ") + e.what());
  }
  rig.validate();
  return rig;
}

std::string format_rig(const CameraRig& rig) {
  nlohmann::json doc;
  doc["cameras"] = nlohmann::json::array();
  for (const auto& cam : rig.cameras) {
    nlohmann::json c;
    c["view"] = cam.view;
    c["units"] = "normalized";
    c["image"] = {{"width", cam.image_width}, {"height", cam.image_height}};
    c["intrinsics"] = {{"fu", cam.intrinsics.fu},
                       {"fv", cam.intrinsics.fv},
                       {"cu", cam.intrinsics.cu},
                       {"cv", cam.intrinsics.cv},
                       {"bx", cam.intrinsics.bx}};
    c["rotation"] = cam.extrinsics.rotation;
    c["translation"] = cam.extrinsics.translation;
    doc["cameras"].push_back(c);
  }
  return doc.dump(2);
}

CameraRig load_rig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open rig file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_rig(ss.str());
}

void save_rig(const std::filesystem::path& path, const CameraRig& rig) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write rig file " + path.string());
  out << format_rig(rig) << '\n';
}

}  // namespace ego3rt::geometry
