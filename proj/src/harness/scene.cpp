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

#include "ego3rt/harness/scene.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "ego3rt/errors.hpp"
#include "ego3rt/harness/viz.hpp"
#include "ego3rt/numerics/egt_io.hpp"
#include "ego3rt/numerics/rng.hpp"

namespace ego3rt::harness {

namespace {

using Color = std::array<Real, 3>;

constexpr Color kSky{0.55, 0.70, 0.90};
constexpr Color kGround{0.35, 0.50, 0.30};
constexpr std::array<Color, 2> kElementColors{{{0.30, 0.30, 0.33}, {0.95, 0.85, 0.20}}};

constexpr std::size_t kPlacementAttempts = 200;

}  // namespace

bool MapBand::contains(Real x, Real y) const {
  return std::abs(-std::sin(angle) * x + std::cos(angle) * y - offset) <= half_width;
}

SceneConfig SceneConfig::desk() {
  SceneConfig c;
  c.classes = {{"car", 3.0, 1.6, 1.4, {0.85, 0.15, 0.10}}, {"van", 4.0, 2.0, 2.0, {0.15, 0.35, 0.90}}};
  return c;
}

void SceneConfig::validate() const {
  if (rig.cameras == 0 || rig.image_width < 2 || rig.image_height < 2)
    throw ConfigError("scene: rig needs cameras and images of at least 2x2");
  if (min_objects > max_objects) throw ConfigError("scene: min_objects > max_objects");
  if (max_objects > 0 && classes.empty()) throw ConfigError("scene: objects requested but no classes");
  for (const auto& c : classes)
    if (!(c.length > 0 && c.width > 0 && c.height > 0)) throw ConfigError("scene: class sizes must be positive");
  if (!(place_min_radius >= 0 && place_max_radius > place_min_radius && place_max_abs > 0))
    throw ConfigError("scene: bad placement range");
  if (paint_map && elements.size() != 2)
    throw ConfigError("scene: painted maps have two elements (drivable, divider)");
  if (!(road_half_width_min > 0 && road_half_width_max >= road_half_width_min && divider_half_width > 0))
    throw ConfigError("scene: bad band widths");
  raster.validate();
  if (!(raster_r_max > raster_r_min && raster_r_min >= 0)) throw ConfigError("scene: bad raster annulus");
}

Tensor rasterize_elements(const std::vector<std::vector<MapBand>>& elements, const eyes::BevGrid& grid) {
  const std::size_t E = elements.size();
  Tensor out(Shape{grid.side, grid.side, E});
  for (std::size_t r = 0; r < grid.side; ++r)
    for (std::size_t c = 0; c < grid.side; ++c) {
      const auto [x, y] = grid.cell_center(r, c);
      for (std::size_t e = 0; e < E; ++e)
        for (const auto& band : elements[e])
          if (band.contains(x, y)) out.at({r, c, e}) = 1;
    }
  return out;
}

std::vector<std::uint8_t> footprint_cells(const heads::Box& box, const eyes::BevGrid& grid) {
  std::vector<std::uint8_t> cells(grid.side * grid.side, 0);
  const Real cy = std::cos(box.yaw), sy = std::sin(box.yaw);
  for (std::size_t r = 0; r < grid.side; ++r)
    for (std::size_t c = 0; c < grid.side; ++c) {
      const auto [x, y] = grid.cell_center(r, c);
      const Real dx = x - box.x, dy = y - box.y;
      const Real along = cy * dx + sy * dy, across = -sy * dx + cy * dy;
      if (std::abs(along) <= box.l / 2 && std::abs(across) <= box.w / 2) cells[r * grid.side + c] = 1;
    }
  return cells;
}

namespace {

// Entry distance of the ray o + t d into the box (slab test in the box
// frame), or infinity.
Real hit_box(const geometry::Vec3& o, const geometry::Vec3& d, const heads::Box& b) {
  const Real c = std::cos(b.yaw), s = std::sin(b.yaw);
  const Real ox = o[0] - b.x, oy = o[1] - b.y, oz = o[2] - b.z;
  const std::array<Real, 3> lo{c * ox + s * oy, -s * ox + c * oy, oz};
  const std::array<Real, 3> ld{c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]};
  const std::array<Real, 3> half{b.l / 2, b.w / 2, b.h / 2};
  Real t0 = 0, t1 = std::numeric_limits<Real>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(ld[k]) < 1e-15) {
      if (std::abs(lo[k]) > half[k]) return std::numeric_limits<Real>::infinity();
      continue;
    }
    Real a = (-half[k] - lo[k]) / ld[k], z = (half[k] - lo[k]) / ld[k];
    if (a > z) std::swap(a, z);
    t0 = std::max(t0, a);
    t1 = std::min(t1, z);
    if (t0 > t1) return std::numeric_limits<Real>::infinity();
  }
  return t0;
}

}  // namespace

Tensor render_view(const geometry::CameraModel& camera, const std::vector<heads::Box>& boxes,
                   const std::vector<std::vector<MapBand>>& elements, const SceneConfig& config) {
  const std::size_t W = camera.image_width, H = camera.image_height;
  const auto& in = camera.intrinsics;
  const auto& R = camera.extrinsics.rotation;
  const auto& t = camera.extrinsics.translation;
  // World point of camera-frame p: R^T (p - t).
  auto to_world = [&](const geometry::Vec3& p) {
    const geometry::Vec3 q{p[0] - t[0], p[1] - t[1], p[2] - t[2]};
    return geometry::Vec3{R[0] * q[0] + R[3] * q[1] + R[6] * q[2], R[1] * q[0] + R[4] * q[1] + R[7] * q[2],
                          R[2] * q[0] + R[5] * q[1] + R[8] * q[2]};
  };
  const geometry::Vec3 origin = to_world({in.bx, 0, 0});
  const geometry::Vec3 zero = to_world({0, 0, 0});

  Tensor img(Shape{H, W, 3});
  for (std::size_t py = 0; py < H; ++py)
    for (std::size_t px = 0; px < W; ++px) {
      const Real u = static_cast<Real>(px) / static_cast<Real>(W - 1);
      const Real v = static_cast<Real>(py) / static_cast<Real>(H - 1);
      const geometry::Vec3 far = to_world({(u - in.cu) / in.fu, (v - in.cv) / in.fv, 1});
      const geometry::Vec3 d{far[0] - zero[0], far[1] - zero[1], far[2] - zero[2]};

      Color color = kSky;
      Real nearest = std::numeric_limits<Real>::infinity();
      if (d[2] < 0) {
        nearest = -origin[2] / d[2];
        const Real gx = origin[0] + nearest * d[0], gy = origin[1] + nearest * d[1];
        color = kGround;
        // Later elements paint over earlier ones.
        for (std::size_t e = 0; e < elements.size(); ++e)
          for (const auto& band : elements[e])
            if (band.contains(gx, gy)) color = kElementColors[std::min<std::size_t>(e, kElementColors.size() - 1)];
      }
      for (const auto& b : boxes) {
        const Real hit = hit_box(origin, d, b);
        if (hit < nearest) {
          nearest = hit;
          color = config.classes.at(b.cls).color;
        }
      }
      for (std::size_t k = 0; k < 3; ++k) img.at({py, px, k}) = color[k];
    }
  return img;
}

SyntheticScene gen_scene(std::uint64_t seed, const SceneConfig& config) {
  config.validate();
  SyntheticScene scene;
  scene.seed = seed;
  scene.rig = geometry::make_surround_rig(config.rig);
  Rng rng(mix_seed(seed, 0x5ce4e));

  if (config.paint_map) {
    const Real angle = rng.bernoulli(0.5) ? 0 : std::numbers::pi_v<Real> / 2;
    const Real offset = rng.uniform(-config.road_offset_max, config.road_offset_max);
    const Real half = rng.uniform(config.road_half_width_min, config.road_half_width_max);
    scene.elements = {{{angle, offset, half}}, {{angle, offset, config.divider_half_width}}};
  } else {
    scene.elements.assign(config.elements.size(), {});
  }

  const std::size_t count =
      config.max_objects == 0
          ? 0
          : static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(config.min_objects),
                                                 static_cast<std::int64_t>(config.max_objects)));
  for (std::size_t attempt = 0; scene.boxes.size() < count && attempt < kPlacementAttempts; ++attempt) {
    const std::size_t cls = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(config.classes.size()) - 1));
    const auto& oc = config.classes[cls];
    const Real radius = rng.uniform(config.place_min_radius, config.place_max_radius);
    const Real azimuth = rng.uniform(0, 2 * std::numbers::pi_v<Real>);
    heads::Box b;
    b.cls = cls;
    b.x = radius * std::cos(azimuth);
    b.y = radius * std::sin(azimuth);
    b.l = oc.length;
    b.w = oc.width;
    b.h = oc.height;
    b.z = oc.height / 2;
    if (std::abs(b.x) > config.place_max_abs || std::abs(b.y) > config.place_max_abs) continue;
    const Real reach = std::hypot(b.l, b.w) / 2;
    bool clear = true;
    for (const auto& o : scene.boxes)
      if (std::hypot(o.x - b.x, o.y - b.y) < reach + std::hypot(o.l, o.w) / 2 + 0.5) clear = false;
    if (!clear) continue;
    bool seen = false;
    for (const auto& cam : scene.rig.cameras) {
      const auto p = geometry::try_project(cam, {b.x, b.y, b.z});
      seen = seen || (p && geometry::visible(*p));
    }
    if (!seen) continue;
    scene.boxes.push_back(b);
  }
  if (scene.boxes.size() < count) throw ConfigError("scene: could not place the requested objects");

  for (const auto& cam : scene.rig.cameras) scene.images.push_back(render_view(cam, scene.boxes, scene.elements, config));
  scene.rasters = rasterize_elements(scene.elements, config.raster);
  scene.raster_valid = eyes::annulus_mask(config.raster, config.raster_r_min, config.raster_r_max);
  return scene;
}

void save_scene(const std::filesystem::path& dir, const SyntheticScene& scene) {
  std::filesystem::create_directories(dir);
  nlohmann::json doc;
  doc["seed"] = scene.seed;
  doc["rig"] = nlohmann::json::parse(geometry::format_rig(scene.rig));
  doc["boxes"] = nlohmann::json::array();
  for (const auto& b : scene.boxes)
    doc["boxes"].push_back({{"class", b.cls}, {"x", b.x}, {"y", b.y}, {"z", b.z}, {"l", b.l},
                            {"w", b.w}, {"h", b.h}, {"yaw", b.yaw}, {"vx", b.vx}, {"vy", b.vy}});
  doc["elements"] = nlohmann::json::array();
  for (const auto& bands : scene.elements) {
    nlohmann::json e = nlohmann::json::array();
    for (const auto& band : bands)
      e.push_back({{"angle", band.angle}, {"offset", band.offset}, {"half_width", band.half_width}});
    doc["elements"].push_back(e);
  }
  std::ofstream out(dir / "scene.json");
  out.precision(17);
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + (dir / "scene.json").string());
  for (std::size_t t = 0; t < scene.images.size(); ++t) {
    save_egt(dir / ("view_" + std::to_string(t + 1) + ".egt"), scene.images[t]);
    write_ppm(dir / ("view_" + std::to_string(t + 1) + ".ppm"), scene.images[t]);
  }
  save_egt(dir / "rasters.egt", scene.rasters);
}

SyntheticScene load_scene(const std::filesystem::path& dir, const SceneConfig& config) {
  std::ifstream in(dir / "scene.json");
  if (!in) throw IoError("cannot read " + (dir / "scene.json").string());
  nlohmann::json doc;
  try {
    in >> doc;
    SyntheticScene scene;
    scene.seed = doc.at("seed").get<std::uint64_t>();
    scene.rig = geometry::parse_rig(doc.at("rig").dump());
    for (const auto& j : doc.at("boxes")) {
      heads::Box b;
      b.cls = j.at("class").get<std::size_t>();
      b.x = j.at("x");
      b.y = j.at("y");
      b.z = j.at("z");
      b.l = j.at("l");
      b.w = j.at("w");
      b.h = j.at("h");
      b.yaw = j.at("yaw");
      b.vx = j.at("vx");
      b.vy = j.at("vy");
      b.validate();
      scene.boxes.push_back(b);
    }
    for (const auto& e : doc.at("elements")) {
      std::vector<MapBand> bands;
      for (const auto& j : e) bands.push_back({j.at("angle"), j.at("offset"), j.at("half_width")});
      scene.elements.push_back(bands);
    }
    for (std::size_t t = 0; t < scene.rig.view_count(); ++t)
      scene.images.push_back(load_egt(dir / ("view_" + std::to_string(t + 1) + ".egt")));
    scene.rasters = load_egt(dir / "rasters.egt");
    require_shape(scene.rasters, Shape{config.raster.side, config.raster.side, scene.elements.size()},
                  "scene rasters");
    scene.raster_valid = eyes::annulus_mask(config.raster, config.raster_r_min, config.raster_r_max);
    return scene;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scene " + dir.string() + ": " + e.what());
  }
}

}  // namespace ego3rt::harness
