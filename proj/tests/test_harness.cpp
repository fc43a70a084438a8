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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ego3rt/errors.hpp"
#include "ego3rt/harness/augment.hpp"
#include "ego3rt/harness/checkpoint.hpp"
#include "ego3rt/harness/config.hpp"
#include "ego3rt/harness/eval.hpp"
#include "ego3rt/harness/model.hpp"
#include "ego3rt/harness/parallel.hpp"
#include "ego3rt/harness/scene.hpp"
#include "ego3rt/harness/train.hpp"
#include "ego3rt/harness/viz.hpp"
#include "ego3rt/numerics/grad_check.hpp"
#include "ego3rt/numerics/rng.hpp"
#include "support/micro_run.hpp"
#include "support/test_util.hpp"

namespace ego3rt::harness {
namespace {

namespace fs = std::filesystem;
using testing::micro_run;
using testing::random_tensor;
using testing::scratch_dir;

constexpr Real kPi = std::numbers::pi_v<Real>;

bool same_boxes(const std::vector<heads::Box>& a, const std::vector<heads::Box>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &p = a[i], &q = b[i];
    if (p.cls != q.cls || p.x != q.x || p.y != q.y || p.z != q.z || p.l != q.l || p.w != q.w || p.h != q.h ||
        p.yaw != q.yaw || p.vx != q.vx || p.vy != q.vy)
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

TEST(Scene, EmptyConfigGivesBlankScene) {
  SceneConfig cfg = SceneConfig::desk();
  cfg.min_objects = cfg.max_objects = 0;
  cfg.paint_map = false;
  const SyntheticScene s = gen_scene(3, cfg);
  EXPECT_TRUE(s.boxes.empty());
  ASSERT_EQ(s.images.size(), 4u);
  // Only sky and bare ground colors appear.
  for (const auto& img : s.images) {
    std::set<std::array<Real, 3>> colors;
    for (std::size_t i = 0; i < img.size(); i += 3) colors.insert({img[i], img[i + 1], img[i + 2]});
    EXPECT_EQ(colors.size(), 2u);
  }
  for (Real v : s.rasters.values()) EXPECT_EQ(v, 0);
  EXPECT_EQ(s.rasters.shape(), (Shape{96, 96, 2}));
}

TEST(Scene, SameSeedIsBitwiseIdentical) {
  const SceneConfig cfg = SceneConfig::desk();
  const SyntheticScene a = gen_scene(11, cfg), b = gen_scene(11, cfg), c = gen_scene(12, cfg);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.rasters, b.rasters);
  EXPECT_TRUE(same_boxes(a.boxes, b.boxes));
  EXPECT_FALSE(a.images == c.images);
}

TEST(Scene, GeneratedScenesRespectPlacementRules) {
  const SceneConfig cfg = SceneConfig::desk();
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const SyntheticScene s = gen_scene(seed, cfg);
    ASSERT_GE(s.boxes.size(), 1u);
    ASSERT_LE(s.boxes.size(), 4u);
    for (std::size_t i = 0; i < s.boxes.size(); ++i) {
      const auto& b = s.boxes[i];
      const Real r = std::hypot(b.x, b.y);
      EXPECT_GE(r, cfg.place_min_radius);
      EXPECT_LE(r, cfg.place_max_radius);
      EXPECT_EQ(b.vx, 0);
      EXPECT_EQ(b.vy, 0);
      EXPECT_EQ(b.z, b.h / 2);
      // Visible in at least one camera.
      bool seen = false;
      for (const auto& cam : s.rig.cameras) {
        const auto p = geometry::try_project(cam, {b.x, b.y, b.z});
        seen = seen || (p && geometry::visible(*p));
      }
      EXPECT_TRUE(seen) << "seed " << seed << " box " << i;
      for (std::size_t j = 0; j < i; ++j) {
        const auto& o = s.boxes[j];
        EXPECT_GT(std::hypot(o.x - b.x, o.y - b.y), (std::hypot(o.l, o.w) + std::hypot(b.l, b.w)) / 2);
      }
    }
    // Rasters: the divider lies inside the drivable band.
    for (std::size_t i = 0; i < s.rasters.size(); i += 2)
      if (s.rasters[i + 1] == 1) EXPECT_EQ(s.rasters[i], 1);
  }
}

TEST(Scene, BoxAheadAppearsOnlyInForwardCamera) {
  SceneConfig cfg = SceneConfig::desk();
  const auto rig = geometry::make_surround_rig(cfg.rig);
  heads::Box car;
  car.x = 5;
  car.l = 3.0;
  car.w = 1.6;
  car.h = 1.4;
  car.z = 0.7;
  const std::vector<std::vector<MapBand>> none(2);
  for (std::size_t t = 0; t < rig.cameras.size(); ++t) {
    const Tensor with = render_view(rig.cameras[t], {car}, none, cfg);
    const Tensor without = render_view(rig.cameras[t], {}, none, cfg);
    std::size_t changed = 0;
    Real umin = 2, umax = -1, vmin = 2, vmax = -1;
    for (std::size_t py = 0; py < 64; ++py)
      for (std::size_t px = 0; px < 64; ++px)
        if (with.at({py, px, 0}) != without.at({py, px, 0})) {
          ++changed;
          umin = std::min(umin, px / Real(63));
          umax = std::max(umax, px / Real(63));
          vmin = std::min(vmin, py / Real(63));
          vmax = std::max(vmax, py / Real(63));
        }
    if (t != 0) {
      EXPECT_EQ(changed, 0u) << "camera " << t;
      continue;
    }
    ASSERT_GT(changed, 0u);
    // The changed pixels lie inside the projected hull of the eight corners.
    Real pu0 = 2, pu1 = -1, pv0 = 2, pv1 = -1;
    for (int sx : {-1, 1})
      for (int sy : {-1, 1})
        for (int sz : {0, 1}) {
          const auto p = geometry::project(rig.cameras[0], {car.x + sx * car.l / 2, sy * car.w / 2, sz * car.h});
          pu0 = std::min(pu0, p.u);
          pu1 = std::max(pu1, p.u);
          pv0 = std::min(pv0, p.v);
          pv1 = std::max(pv1, p.v);
        }
    EXPECT_GE(umin, pu0);
    EXPECT_LE(umax, pu1);
    EXPECT_GE(vmin, pv0);
    EXPECT_LE(vmax, pv1);
    // And nearly fill it (one pixel of slack on each side).
    EXPECT_LE(umin - pu0, 1.0 / 63);
    EXPECT_LE(pu1 - umax, 1.0 / 63);
  }
}

TEST(Scene, FootprintMatchesAnalyticCellBlock) {
  heads::Box car;
  car.x = 5;
  car.l = 3.0;
  car.w = 1.6;
  const eyes::BevGrid grid{96, Real(1) / 6};
  const auto cells = footprint_cells(car, grid);
  // Centers x = (col + 0.5 - 48) / 6 in [3.5, 6.5] -> cols 69..86;
  // y = (48 - row - 0.5) / 6 in [-0.8, 0.8] -> rows 43..52.
  for (std::size_t r = 0; r < 96; ++r)
    for (std::size_t c = 0; c < 96; ++c) {
      const bool inside = r >= 43 && r <= 52 && c >= 69 && c <= 86;
      EXPECT_EQ(cells[r * 96 + c], inside ? 1 : 0) << r << "," << c;
    }
}

TEST(Scene, PaintedBandProjectsWhereRendered) {
  SceneConfig cfg = SceneConfig::desk();
  const auto rig = geometry::make_surround_rig(cfg.rig);
  const std::vector<std::vector<MapBand>> bands{{}, {{0, 0, 0.75}}};
  const Tensor img = render_view(rig.cameras[0], {}, bands, cfg);
  for (Real x = 1.5; x <= 10; x += 0.5) {
    const auto p = geometry::project(rig.cameras[0], {x, 0, 0});
    ASSERT_TRUE(geometry::visible(p)) << x;
    const std::size_t px = static_cast<std::size_t>(std::lround(p.u * 63));
    const std::size_t py = static_cast<std::size_t>(std::lround(p.v * 63));
    EXPECT_NEAR(img.at({py, px, 0}), 0.95, 1e-12) << "x=" << x;
  }
}

TEST(Scene, SaveLoadRoundTrip) {
  const SceneConfig cfg = SceneConfig::desk();
  const SyntheticScene a = gen_scene(5, cfg);
  const fs::path dir = scratch_dir("scene_io");
  save_scene(dir, a);
  EXPECT_TRUE(fs::exists(dir / "view_1.ppm"));
  const SyntheticScene b = load_scene(dir, cfg);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.rasters, b.rasters);
  EXPECT_EQ(a.raster_valid, b.raster_valid);
  EXPECT_TRUE(same_boxes(a.boxes, b.boxes));
  ASSERT_EQ(a.elements.size(), b.elements.size());
  EXPECT_EQ(b.elements[0][0].half_width, a.elements[0][0].half_width);
  EXPECT_EQ(b.rig.cameras[2].extrinsics.rotation, a.rig.cameras[2].extrinsics.rotation);
}

TEST(Scene, ConfigValidation) {
  SceneConfig cfg = SceneConfig::desk();
  cfg.min_objects = 5;
  EXPECT_THROW(gen_scene(0, cfg), ConfigError);
  cfg = SceneConfig::desk();
  cfg.classes.clear();
  EXPECT_THROW(gen_scene(0, cfg), ConfigError);
  cfg = SceneConfig::desk();
  cfg.place_max_radius = 1;
  EXPECT_THROW(gen_scene(0, cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

TEST(Augment, SwitchesOffIsIdentity) {
  const AugmentConfig off;
  Rng rng(1);
  const eyes::BevGrid grid{32, 0.5};
  const Tensor map = random_tensor({32, 32, 3}, rng);
  heads::Box b;
  b.x = 3;
  b.y = -2;
  b.yaw = 0.3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const BevTransform t = BevTransform::sample(off, seed);
    EXPECT_TRUE(t.is_identity());
    const AugmentedPair p = bev_augment(map, {b}, grid, off, seed);
    EXPECT_EQ(p.map, map);
    EXPECT_TRUE(same_boxes(p.boxes.boxes, {b}));
    EXPECT_EQ(p.boxes.cropped[0], 0);
  }
}

TEST(Augment, HorizontalFlipIsAnInvolution) {
  Rng rng(2);
  const eyes::BevGrid grid{96, Real(1) / 6};
  const Tensor rasters = random_tensor({96, 96, 2}, rng);
  BevTransform flip;
  flip.flip_x = true;
  heads::Box b;
  b.x = 2.5;
  b.y = 1;
  const AugmentedPair once = bev_augment(rasters, {b}, grid, flip);
  EXPECT_FALSE(once.map == rasters);
  EXPECT_EQ(once.boxes.boxes[0].x, -2.5);
  const AugmentedPair twice = bev_augment(once.map, once.boxes.boxes, grid, flip);
  EXPECT_EQ(twice.map, rasters);
  EXPECT_EQ(twice.boxes.boxes[0].x, 2.5);
  EXPECT_EQ(twice.boxes.boxes[0].y, 1);
  // Flip is a pure index mirror along columns.
  for (std::size_t r = 0; r < 96; r += 7)
    for (std::size_t c = 0; c < 96; c += 5) EXPECT_EQ(once.map.at({r, c, 0}), rasters.at({r, 95 - c, 0}));
}

TEST(Augment, VerticalFlipMirrorsRowsAndNegatesY) {
  Rng rng(3);
  const eyes::BevGrid grid{32, 0.5};
  const Tensor map = random_tensor({32, 32, 2}, rng);
  BevTransform flip;
  flip.flip_y = true;
  heads::Box b;
  b.y = 3;
  b.yaw = 0.4;
  const AugmentedPair p = bev_augment(map, {b}, grid, flip);
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) EXPECT_EQ(p.map.at({r, c, 1}), map.at({31 - r, c, 1}));
  EXPECT_EQ(p.boxes.boxes[0].y, -3);
  EXPECT_NEAR(p.boxes.boxes[0].yaw, -0.4, 1e-15);
}

TEST(Augment, RotationMovesCentersAndYawAnalytically) {
  const eyes::BevGrid grid{32, 0.5};
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    BevTransform t;
    t.rotation = rng.uniform(-kPi / 8, kPi / 8);
    heads::Box b;
    b.x = rng.uniform(-6, 6);
    b.y = rng.uniform(-6, 6);
    b.yaw = rng.uniform(-1, 1);
    const heads::Box m = t.apply(b);
    const Real c = std::cos(t.rotation), s = std::sin(t.rotation);
    EXPECT_NEAR(m.x, c * b.x - s * b.y, 1e-14);
    EXPECT_NEAR(m.y, s * b.x + c * b.y, 1e-14);
    EXPECT_NEAR(m.yaw, b.yaw + t.rotation, 1e-14);
    EXPECT_NEAR(std::hypot(m.x, m.y), std::hypot(b.x, b.y), 1e-13);
    EXPECT_EQ(m.l, b.l);
  }
}

TEST(Augment, QuarterTurnsPermuteCellsExactly) {
  const eyes::BevGrid grid{16, 0.5};
  Rng rng(5);
  const Tensor map = random_tensor({16, 16, 2}, rng);
  BevTransform quarter;
  quarter.rotation = kPi / 2;
  const BevWarp warp(quarter, grid);
  const Tensor once = warp.forward(map);
  // Counter-clockwise quarter turn: output (r, c) reads input (c, 15 - r)... in
  // ego terms the point (x, y) comes from (y, -x).
  for (std::size_t r = 0; r < 16; ++r)
    for (std::size_t c = 0; c < 16; ++c) {
      const auto [x, y] = grid.cell_center(r, c);
      const auto idx = grid.index_of(y, -x);
      EXPECT_EQ(once.at({r, c, 0}), map.at({static_cast<std::size_t>(std::lround(idx[0])),
                                            static_cast<std::size_t>(std::lround(idx[1])), 0}));
    }
  Tensor back = map;
  for (int k = 0; k < 4; ++k) back = warp.forward(back);
  EXPECT_EQ(back, map);
}

TEST(Augment, WarpBackwardIsTheAdjoint) {
  const eyes::BevGrid grid{20, 0.5};
  Rng rng(6);
  BevTransform t;
  t.rotation = 0.3;
  t.scale = 1.04;
  t.flip_x = true;
  const BevWarp warp(t, grid);
  const Tensor x = random_tensor({20, 20, 3}, rng), g = random_tensor({20, 20, 3}, rng);
  const Tensor wx = warp.forward(x), wtg = warp.backward(g);
  Real lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lhs += wx[i] * g[i];
    rhs += x[i] * wtg[i];
  }
  EXPECT_NEAR(lhs, rhs, 1e-11);
}

TEST(Augment, ConstantMapStaysConstantInsideAndZeroOutside) {
  const eyes::BevGrid grid{24, 0.5};
  BevTransform t;
  t.rotation = 0.35;
  t.scale = 0.96;
  const BevWarp warp(t, grid);
  const Tensor ones(Shape{24, 24, 1}, 1);
  const Tensor w = warp.forward(ones);
  const auto mask = warp.warp_mask(std::vector<std::uint8_t>(24 * 24, 1));
  std::size_t masked = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) EXPECT_NEAR(w[i], 1, 1e-12);
    masked += !mask[i];
    EXPECT_LE(w[i], 1 + 1e-12);
    EXPECT_GE(w[i], 0);
  }
  EXPECT_GT(masked, 0u);  // rotated corners leave the map
}

TEST(Augment, PreservesCountAndLabelsAndFlagsCrops) {
  const eyes::BevGrid grid{32, 0.5};
  AugmentConfig all;
  all.hflip = all.vflip = all.rotate = all.scale = true;
  Rng rng(7);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::vector<heads::Box> boxes(3);
    for (auto& b : boxes) {
      b.cls = static_cast<std::size_t>(rng.integer(0, 1));
      b.x = rng.uniform(-7.9, 7.9);
      b.y = rng.uniform(-7.9, 7.9);
    }
    const BevTransform t = BevTransform::sample(all, seed);
    const AugmentedBoxes a = augment_boxes(boxes, t, grid);
    ASSERT_EQ(a.boxes.size(), boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      EXPECT_EQ(a.boxes[i].cls, boxes[i].cls);
      const bool inside = std::abs(a.boxes[i].x) < 8 && std::abs(a.boxes[i].y) < 8;
      EXPECT_EQ(a.cropped[i], inside ? 0 : 1);
    }
  }
  heads::Box edge;
  edge.x = 7.9;
  BevTransform grow;
  grow.scale = 1.05;
  EXPECT_EQ(augment_boxes({edge}, grow, grid).cropped[0], 1);
}

TEST(Augment, SampledRangesAndRates) {
  AugmentConfig all;
  all.hflip = all.vflip = all.rotate = all.scale = true;
  std::size_t flips = 0, rotations = 0, scales = 0;
  const std::size_t n = 4000;
  for (std::uint64_t seed = 0; seed < n; ++seed) {
    const BevTransform t = BevTransform::sample(all, seed);
    flips += t.flip_x;
    rotations += t.rotation != 0;
    scales += t.scale != 1;
    EXPECT_LE(std::abs(t.rotation), 22.5 * kPi / 180);
    EXPECT_GE(t.scale, 0.95);
    EXPECT_LE(t.scale, 1.05);
  }
  for (std::size_t k : {flips, rotations, scales}) {
    EXPECT_GT(k, n * 45 / 100);
    EXPECT_LT(k, n * 55 / 100);
  }
}

TEST(Augment, WarpedFootprintFollowsTheBox) {
  // Rasterized footprint warped with the map equals the footprint of the
  // transformed box up to boundary cells.
  const eyes::BevGrid grid{96, Real(1) / 6};
  heads::Box b;
  b.x = 3;
  b.y = 2;
  b.l = 4;
  b.w = 2;
  const auto cells = footprint_cells(b, grid);
  Tensor map(Shape{96, 96, 1});
  for (std::size_t i = 0; i < cells.size(); ++i) map[i] = cells[i];
  BevTransform t;
  t.rotation = 0.3;
  t.flip_y = true;
  t.scale = 1.03;
  const AugmentedPair p = bev_augment(map, {b}, grid, t);
  const auto moved = footprint_cells(p.boxes.boxes[0], grid);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < moved.size(); ++i) {
    const bool a = p.map[i] > 0.5, m = moved[i] != 0;
    inter += a && m;
    uni += a || m;
  }
  EXPECT_GT(static_cast<Real>(inter) / static_cast<Real>(uni), 0.9);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(Config, EmptyDocumentGivesDefaults) {
  const RunConfig a = parse_config("{}");
  const RunConfig d = RunConfig::defaults();
  EXPECT_EQ(format_config(a), format_config(d));
  EXPECT_EQ(a.model.decoder.views, 4u);
  EXPECT_EQ(a.scenes.scene.raster.side, 96u);
  EXPECT_EQ(a.model.bev.side, 32u);
  EXPECT_EQ(a.model.eyes.radial_count, 8u);
  EXPECT_EQ(a.model.eyes.ray_count, 32u);
  EXPECT_DOUBLE_EQ(a.score_threshold, 0.3);
  EXPECT_DOUBLE_EQ(a.optim.momentum, 0.9);
}

TEST(Config, FormatParseRoundTrip) {
  RunConfig c = micro_run("somewhere");
  c.optim.freeze = {"decoder.pyramid"};
  c.augment.rotate = true;
  c.loss.lambda_seg = {1, 2};
  const std::string text = format_config(c);
  EXPECT_EQ(format_config(parse_config(text)), text);
}

TEST(Config, OverridesNestedKeys) {
  const RunConfig c = parse_config(R"({"model": {"eyes": {"radial": 6}, "bev": {"side": 20}},
                                      "optim": {"learning_rate": 0.5}, "scenes": {"cameras": 6}})");
  EXPECT_EQ(c.model.eyes.radial_count, 6u);
  EXPECT_EQ(c.model.bev.side, 20u);
  EXPECT_EQ(c.scenes.scene.raster.side, 60u);
  EXPECT_EQ(c.model.decoder.views, 6u);
  EXPECT_DOUBLE_EQ(c.optim.learning_rate, 0.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  try {
    parse_config(R"({"model": {"eyes": {"radials": 6}}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.eyes.radials"), std::string::npos);
  }
  EXPECT_THROW(parse_config(R"({"optim": {"steps": "many"}})"), ConfigError);
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(parse_config(R"({"optim": {"momentum": 1.0}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"scenes": {"image_width": 62}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"loss": {"groups": [[0]]}})"), ConfigError);
  EXPECT_THROW(parse_config(R"({"eval": {"score_threshold": 1.5}})"), ConfigError);
}

TEST(Config, HashTracksArchitectureOnly) {
  RunConfig a = RunConfig::defaults(), b = a;
  b.optim.learning_rate = 0.123;
  b.seed = 99;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.model_hash(), b.model_hash());
  b.model.decoder.channels = 48;
  EXPECT_NE(a.model_hash(), b.model_hash());
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

// ---------------------------------------------------------------------------
// Model, training, checkpoints
// ---------------------------------------------------------------------------

TEST(Model, HeadAndEncoderGradientsThroughWarp) {
  const RunConfig cfg = micro_run();
  Ego3rtModel model(cfg.model);
  model.init(3);
  const SyntheticScene scene = gen_scene(8, cfg.scenes.scene);
  BevTransform t;
  t.rotation = 0.2;
  t.flip_x = true;
  const TrainingSample sample = make_sample(scene, cfg, t);
  ASSERT_TRUE(sample.warp);
  auto loss = [&] { return sample_loss(model, sample, cfg, false).total; };
  model.zero_grads();
  sample_loss(model, sample, cfg, true);
  std::vector<GradProbe> probes;
  model.visit([&](const std::string& name, Param& p) {
    const bool downstream = name.rfind("encoder", 0) == 0 || name.rfind("detection", 0) == 0 ||
                            name.rfind("segmentation", 0) == 0;
    if (downstream && p.trainable) probes.push_back({name, p.value.values(), p.grad.values()});
  });
  ASSERT_GT(probes.size(), 10u);
  const GradReport report = grad_check(loss, probes, 1e-3, 6);
  for (const auto& e : report.entries) EXPECT_LT(e.max_rel_error, 1e-4) << e.name;
}

TEST(Model, UntrainedModelAtHighThresholdPredictsNothing) {
  RunConfig cfg = micro_run();
  cfg.score_threshold = 0.9;
  Ego3rtModel model(cfg.model);
  model.init(1);
  const auto scenes = make_scene_set(cfg);
  const EvalResult r = evaluate(model, scenes, cfg);
  EXPECT_TRUE(r.predictions.empty());
  EXPECT_EQ(r.report.map.map, 0);
}

TEST(Eval, GroundTruthPassthroughScoresPerfectly) {
  const RunConfig cfg = RunConfig::defaults();
  std::vector<SyntheticScene> scenes{gen_scene(1, cfg.scenes.scene), gen_scene(2, cfg.scenes.scene)};
  std::vector<heads::Box> truth;
  std::vector<Tensor> logits;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (auto b : scenes[i].boxes) {
      b.scene = i;
      truth.push_back(b);
    }
    Tensor l = scenes[i].rasters;
    for (auto& v : l.values()) v = v > 0.5 ? 10 : -10;
    logits.push_back(l);
  }
  const heads::MetricsReport r = score(truth, truth, logits, scenes, cfg);
  EXPECT_NEAR(r.map.map, 1, 1e-12);
  for (Real iou : r.iou) EXPECT_EQ(iou, 1);
  EXPECT_EQ(centers_within(truth, truth, 0), truth.size());
}

TEST(Eval, CentersWithinCountsSameClassSameScene) {
  heads::Box g;
  g.x = 1;
  heads::Box near = g, other_cls = g, other_scene = g;
  near.x = 1.4;
  other_cls.cls = 1;
  other_scene.scene = 3;
  EXPECT_EQ(centers_within({near}, {g}, 0.5), 1u);
  EXPECT_EQ(centers_within({near}, {g}, 0.3), 0u);
  EXPECT_EQ(centers_within({other_cls, other_scene}, {g}, 0.5), 0u);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  RunConfig cfg = micro_run();
  cfg.optim.learning_rate = 0;
  Trainer tr(cfg, make_scene_set(cfg));
  std::vector<Tensor> before;
  tr.model().visit([&](const std::string&, Param& p) { before.push_back(p.value); });
  for (int i = 0; i < 3; ++i) tr.step();
  std::size_t k = 0;
  tr.model().visit([&](const std::string& name, Param& p) { EXPECT_EQ(p.value, before[k++]) << name; });
}

TEST(Train, OffsetBiasAndFrozenPrefixesNeverMove) {
  RunConfig cfg = micro_run();
  cfg.optim.learning_rate = 0.05;
  cfg.optim.freeze = {"decoder.pyramid"};
  Trainer tr(cfg, make_scene_set(cfg));
  std::map<std::string, Tensor> before;
  tr.model().visit([&](const std::string& n, Param& p) { before[n] = p.value; });
  tr.step();
  tr.step();
  std::size_t biases = 0, moved = 0;
  tr.model().visit([&](const std::string& n, Param& p) {
    const bool fixed = n.find("offset_bias") != std::string::npos || n.rfind("decoder.pyramid", 0) == 0;
    if (n.find("cross_attention.offset_bias") != std::string::npos) {
      ++biases;
      for (Real g : p.grad.values()) EXPECT_EQ(g, 0) << n;
    }
    if (fixed) EXPECT_EQ(p.value, before[n]) << n;
    else moved += !(p.value == before[n]);
  });
  EXPECT_EQ(biases, cfg.model.decoder.layers);
  EXPECT_GT(moved, 20u);
}

TEST(Train, FixedSeedReplaysBitwise) {
  RunConfig cfg = micro_run();
  cfg.augment.hflip = cfg.augment.rotate = cfg.augment.scale = true;
  cfg.optim.batch = 2;
  auto run = [&](std::size_t workers) {
    Trainer tr(cfg, make_scene_set(cfg), workers);
    std::string log;
    for (int i = 0; i < 3; ++i) log += loss_csv_row(tr.step()) + "\n";
    std::vector<Tensor> params;
    tr.model().visit([&](const std::string&, Param& p) { params.push_back(p.value); });
    return std::make_pair(log, params);
  };
  const auto a = run(1), b = run(1), c = run(2);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  // Parallel batch gradients reduce in batch order.
  EXPECT_EQ(a.first, c.first);
  EXPECT_EQ(a.second, c.second);
}

TEST(Train, LossDecreasesOverFirstFiftyStepsOnOneScene) {
  RunConfig cfg = micro_run();
  cfg.scenes.count = 1;
  cfg.optim.learning_rate = 0.002;
  cfg.optim.momentum = 0;
  Trainer tr(cfg, make_scene_set(cfg));
  Real prev = tr.step().loss.total;
  for (int i = 1; i < 50; ++i) {
    const Real cur = tr.step().loss.total;
    EXPECT_LT(cur, prev) << "step " << i + 1;
    prev = cur;
  }
}

TEST(Train, NonFiniteLossAbortsWithDump) {
  const fs::path dir = scratch_dir("nonfinite");
  RunConfig cfg = micro_run(dir.string());
  cfg.optim.learning_rate = 1e300;
  cfg.optim.grad_clip = 0;
  Trainer tr(cfg, make_scene_set(cfg));
  bool thrown = false;
  for (int i = 0; i < 5 && !thrown; ++i) {
    try {
      tr.step();
    } catch (const NumericError&) {
      thrown = true;
    }
  }
  ASSERT_TRUE(thrown);
  bool dumped = false;
  for (const auto& e : fs::directory_iterator(dir))
    dumped = dumped || fs::exists(e.path() / "diagnostic.txt");
  EXPECT_TRUE(dumped);
}

TEST(Train, RunWritesLogAndCheckpoints) {
  const fs::path dir = scratch_dir("train_run");
  RunConfig cfg = micro_run(dir.string());
  cfg.optim.steps = 4;
  cfg.optim.checkpoint_every = 2;
  const TrainResult r = train(cfg);
  ASSERT_EQ(r.log.size(), 4u);
  EXPECT_TRUE(fs::exists(dir / "ckpt_000002" / "manifest.txt"));
  EXPECT_EQ(r.checkpoint, dir / "ckpt_000004");
  std::ifstream csv(dir / "loss.csv");
  std::string header, line;
  std::getline(csv, header);
  EXPECT_EQ(header, loss_csv_header(cfg));
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4u);
}

TEST(Checkpoint, RoundTripGivesBitwiseIdenticalMetrics) {
  const fs::path dir = scratch_dir("ckpt");
  RunConfig cfg = micro_run(dir.string());
  cfg.score_threshold = 0.05;
  Trainer tr(cfg, make_scene_set(cfg));
  tr.step();
  save_checkpoint(dir / "ck", tr.model(), cfg, 1);
  const LoadedCheckpoint ck = load_checkpoint(dir / "ck" / "manifest.txt");
  EXPECT_EQ(ck.step, 1u);
  const auto scenes = make_scene_set(cfg);
  const EvalResult a = evaluate(tr.model(), scenes, cfg), b = evaluate(ck.model, scenes, ck.config);
  EXPECT_EQ(a.report.key_values(), b.report.key_values());
  EXPECT_FALSE(a.predictions.empty());
  // Manifest lists every tensor with its shape.
  std::ifstream in(dir / "ck" / "manifest.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_NE(ss.str().find("config_hash=" + hex64(cfg.model_hash())), std::string::npos);
  EXPECT_NE(ss.str().find("tensor=detection.shared.weight 3x3x16x16 "), std::string::npos);
}

TEST(Checkpoint, MismatchedConfigIsAVersionError) {
  const fs::path dir = scratch_dir("ckpt_mismatch");
  RunConfig cfg = micro_run(dir.string());
  Ego3rtModel model(cfg.model);
  model.init(1);
  save_checkpoint(dir, model, cfg, 0);
  RunConfig other = cfg;
  other.model.decoder.heads = 4;
  EXPECT_THROW(load_checkpoint(dir, &other), VersionError);
  RunConfig same_arch = cfg;
  same_arch.optim.learning_rate = 1;
  EXPECT_NO_THROW(load_checkpoint(dir, &same_arch));
  EXPECT_THROW(load_checkpoint(dir / "nowhere"), IoError);
}

// ---------------------------------------------------------------------------
// Visualization
// ---------------------------------------------------------------------------

TEST(Viz, ConstantFeaturesGiveUniformHeat) {
  const auto grid = eyes::build_eye_grid(4, 16, 1, 8, 0);
  const Tensor feats(Shape{64, 5}, 0.7);
  const Tensor polar = polar_heat(feats, grid);
  EXPECT_EQ(polar.shape(), (Shape{4, 16, 3}));
  for (std::size_t i = 3; i < polar.size(); ++i) EXPECT_EQ(polar[i], polar[i % 3]);
  const Tensor rect = rect_heat(feats, grid, {16, 1.0});
  const auto valid = eyes::annulus_mask({16, 1.0}, 1, 8);
  std::array<Real, 3> first{-1, -1, -1};
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid[i]) continue;
    if (first[0] < 0) first = {rect[3 * i], rect[3 * i + 1], rect[3 * i + 2]};
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(rect[3 * i + k], first[k]);
  }
}

TEST(Viz, SingleActiveEyeLandsAtItsPosition) {
  const auto grid = eyes::build_eye_grid(6, 24, 1, 9, 0);
  const eyes::BevGrid bev{40, 0.5};
  for (std::size_t eye : {std::size_t{2 * 24 + 3}, std::size_t{4 * 24 + 17}, std::size_t{5 * 24 + 9}}) {
    Tensor feats(Shape{grid.eye_count(), 2});
    feats.at({eye, 0}) = feats.at({eye, 1}) = 1;
    const Tensor polar = polar_heat(feats, grid);
    std::size_t bright = 0;
    for (std::size_t i = 0; i < grid.eye_count(); ++i)
      if (polar[3 * i] == 1 && polar[3 * i + 2] == 1) {
        ++bright;
        EXPECT_EQ(i, eye);
      }
    EXPECT_EQ(bright, 1u);
    const Tensor rect = rect_heat(feats, grid, bev);
    std::size_t best = 0;
    for (std::size_t i = 0; i < bev.side * bev.side; ++i) {
      const Real s = rect[3 * i] + rect[3 * i + 1] + rect[3 * i + 2];
      if (s > rect[3 * best] + rect[3 * best + 1] + rect[3 * best + 2]) best = i;
    }
    const auto& p = grid.positions[eye];
    const auto idx = bev.index_of(p[0], p[1]);
    EXPECT_LE(std::abs(static_cast<Real>(best / bev.side) - idx[0]), 1.0) << eye;
    EXPECT_LE(std::abs(static_cast<Real>(best % bev.side) - idx[1]), 1.0) << eye;
  }
}

TEST(Viz, OverlayMatchesRasterDimensions) {
  const RunConfig cfg = RunConfig::defaults();
  const SyntheticScene s = gen_scene(2, cfg.scenes.scene);
  Tensor logits = s.rasters;
  for (auto& v : logits.values()) v = v > 0.5 ? 1 : -1;
  const Tensor img = mask_overlay(logits, s.rasters, s.raster_valid, 1);
  EXPECT_EQ(img.extent(0), cfg.scenes.scene.raster.side);
  EXPECT_EQ(img.extent(1), cfg.scenes.scene.raster.side);
  // Perfect prediction: no red or green pixels.
  for (std::size_t i = 0; i < img.size(); i += 3) EXPECT_FALSE(img[i + 1] == 0.8 && img[i] == 0.1);
  EXPECT_THROW(mask_overlay(logits, s.rasters, s.raster_valid, 2), DimensionError);
}

TEST(Viz, PpmRoundTripAndBoxCanvas) {
  const fs::path dir = scratch_dir("viz");
  Rng rng(9);
  const Tensor img = random_tensor({5, 7, 3}, rng, 0, 1);
  write_ppm(dir / "a.ppm", img);
  const Tensor back = read_ppm(dir / "a.ppm");
  EXPECT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 0.5 / 255 + 1e-12);

  const eyes::BevGrid grid{32, 0.5};
  heads::Box b;
  b.x = 2;
  b.l = 4;
  b.w = 2;
  const Tensor canvas = box_canvas(grid, 2, {b}, {});
  EXPECT_EQ(canvas.shape(), (Shape{64, 64, 3}));
  // Front edge x = 4 m crosses column (4 / 0.5 + 16) * 2 = 48 near the middle row.
  bool green = false;
  for (std::size_t c = 46; c <= 49; ++c) green = green || canvas.at({32, c, 1}) > 0.5;
  EXPECT_TRUE(green);
}

TEST(Parallel, WorkerCountHonorsCapsAndOrderIsIndexed) {
  EXPECT_GE(worker_count(), 1u);
  EXPECT_EQ(worker_count(1), 1u);
  std::vector<std::size_t> out(100);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = i * i; });
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], i * i);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw ConfigError("x"); }), ConfigError);
}

}  // namespace
}  // namespace ego3rt::harness
