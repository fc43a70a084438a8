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

// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any selected criterion fails.
//
//   acceptance                 all criteria
//   acceptance --criterion 9   one criterion
//   acceptance --out DIR       where the training criteria write their runs

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ego3rt/attention/mvaa.hpp"
#include "ego3rt/attention/self_attention.hpp"
#include "ego3rt/decoder/decoder.hpp"
#include "ego3rt/eyes/eye_grid.hpp"
#include "ego3rt/geometry/camera.hpp"
#include "ego3rt/harness/augment.hpp"
#include "ego3rt/harness/checkpoint.hpp"
#include "ego3rt/harness/eval.hpp"
#include "ego3rt/harness/train.hpp"
#include "ego3rt/heads/heads.hpp"
#include "ego3rt/heads/losses.hpp"
#include "ego3rt/heads/metrics.hpp"
#include "ego3rt/numerics/grad_check.hpp"
#include "ego3rt/numerics/layers.hpp"
#include "ego3rt/numerics/ops.hpp"
#include "support/attention_cases.hpp"
#include "support/decoder_cases.hpp"
#include "support/decoder_oracle.hpp"
#include "support/geometry_oracles.hpp"
#include "support/heads_cases.hpp"
#include "support/micro_run.hpp"
#include "support/test_util.hpp"

namespace fs = std::filesystem;
using namespace ego3rt;
using testing::random_tensor;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. NDS on reference rows
// ---------------------------------------------------------------------------

Outcome nds_rows() {
  struct Row {
    const char* name;
    Real map;
    std::array<Real, 5> tp;
    Real reference;
  };
  const Row rows[] = {{"first", 0.375, {0.657, 0.268, 0.391, 0.850, 0.206}, 0.450},
                      {"second", 0.389, {0.599, 0.268, 0.470, 1.169, 0.172}, 0.443}};
  Outcome o{true, ""};
  for (const auto& r : rows) {
    const Real nds = heads::compute_nds(r.map, r.tp);
    const bool ok = std::abs(nds - r.reference) <= 0.0005 + 1e-12;
    o.pass = o.pass && ok;
    o.detail += std::string(o.detail.empty() ? "" : "; ") + r.name + " row " + fmt("%.4f", nds) + " vs " +
                fmt("%.3f", r.reference) + (ok ? " ok" : " off by " + fmt("%.4f", std::abs(nds - r.reference)));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 2. Projection against the dense homogeneous product
// ---------------------------------------------------------------------------

Outcome projection() {
  Rng rng(2024);
  double worst = 0;
  int compared = 0;
  while (compared < 10000) {
    geometry::CameraModel cam;
    cam.intrinsics = geometry::Intrinsics{rng.uniform(0.2, 2), rng.uniform(0.2, 2), rng.uniform(0, 1),
                                          rng.uniform(0, 1), rng.uniform(-0.5, 0.5)};
    cam.extrinsics = testing::random_pose(rng);
    const geometry::Vec3 p{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const auto want = testing::homogeneous_projection(cam, p);
    if (std::abs(want[2]) < 0.1) continue;
    const auto got = geometry::project(cam, p);
    worst = std::max({worst, std::abs(got.u - want[0]), std::abs(got.v - want[1]), std::abs(got.depth - want[2])});
    ++compared;
  }
  return {worst < 1e-9, std::to_string(compared) + " pairs, max abs error " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------------------
// 3. Attention weight normalization
// ---------------------------------------------------------------------------

Outcome normalization() {
  Rng rng(33);
  attention::MvaaShape s{12, 6, 3, 2, 4, 3};  // C, C_p, heads, scales, views, points
  attention::MvaaParams p = testing::random_params(s, rng);
  rng.fill_uniform(p.attention_weight.value, -3, 3);
  double worst = 0;
  std::size_t masked_nonzero = 0, blind = 0;
  for (int eye = 0; eye < 1000; ++eye) {
    const Tensor y = random_tensor({12}, rng, -2, 2);
    std::vector<std::uint8_t> vis(s.views);
    for (auto& v : vis) v = rng.bernoulli(0.5);
    const bool any = std::any_of(vis.begin(), vis.end(), [](auto v) { return v != 0; });
    blind += !any;
    const auto a = attention::attention_weights(p, y.values(), vis);
    for (std::size_t h = 0; h < s.heads; ++h) {
      double sum = 0;
      for (std::size_t l = 0; l < s.scales; ++l)
        for (std::size_t t = 0; t < s.views; ++t)
          for (std::size_t k = 0; k < s.points; ++k) {
            const double w = a.weights[p.slot(h, l, t, k)];
            if (!vis[t] && w != 0.0) ++masked_nonzero;
            sum += w;
          }
      // An eye no camera sees has no distribution to normalize.
      worst = std::max(worst, std::abs(sum - (any ? 1.0 : 0.0)));
    }
  }
  return {worst < 1e-9 && masked_nonzero == 0, "max |sum - 1| " + fmt("%.3g", worst) + ", masked nonzero " +
                                                   std::to_string(masked_nonzero) + ", blind eyes " +
                                                   std::to_string(blind)};
}

// ---------------------------------------------------------------------------
// 4. Offset-bias law
// ---------------------------------------------------------------------------

Outcome offset_bias() {
  // Norms: every configuration with all four counts at most 4.
  double worst = 0;
  for (std::size_t H = 1; H <= 4; ++H)
    for (std::size_t L = 1; L <= 4; ++L)
      for (std::size_t T = 1; T <= 4; ++T)
        for (std::size_t K = 1; K <= 4; ++K) {
          const Tensor b = attention::init_offset_bias(H, L, T, K);
          for (std::size_t i = 0; i < H * L * T * K; ++i) {
            const double k = static_cast<double>(i % K + 1);
            worst = std::max(worst, std::abs(std::hypot(b[2 * i], b[2 * i + 1]) - k) / k);
          }
        }
  // Gradients: one full training step per configuration.
  std::size_t steps = 0, nonzero = 0, moved = 0;
  for (std::size_t H : {1, 2, 4})
    for (std::size_t L : {1, 3})
      for (std::size_t T : {1, 3, 4})
        for (std::size_t K : {1, 4}) {
          harness::RunConfig cfg = testing::micro_run();
          cfg.scenes.count = 1;
          cfg.scenes.scene.rig.cameras = T;
          cfg.scenes.scene.max_objects = 1;  // room to place it in a single camera's view
          cfg.model.decoder.heads = H;
          cfg.model.decoder.channels = 16;
          cfg.model.decoder.scales = L;
          cfg.model.decoder.points = K;
          cfg.optim.learning_rate = 0.05;
          cfg.resolve();
          cfg.validate();
          harness::Trainer tr(cfg, harness::make_scene_set(cfg));
          tr.dump_on_failure = false;
          std::vector<Tensor> before;
          tr.model().visit([&](const std::string& n, Param& p) {
            if (n.find("offset_bias") != std::string::npos) before.push_back(p.value);
          });
          tr.step();
          std::size_t i = 0;
          tr.model().visit([&](const std::string& n, Param& p) {
            if (n.find("offset_bias") == std::string::npos) return;
            for (Real g : p.grad.values()) nonzero += g != 0;
            moved += !(p.value == before[i++]);
          });
          ++steps;
        }
  // Exact in real arithmetic; a computed hypot may be off by rounding.
  const double ulps = worst / std::numeric_limits<double>::epsilon();
  return {ulps <= 2 && nonzero == 0 && moved == 0,
          "max norm deviation " + fmt("%.2g", ulps) + " ulp over 256 configurations; " + std::to_string(steps) +
              " training steps, nonzero bias grads " + std::to_string(nonzero) + ", moved biases " +
              std::to_string(moved)};
}

// ---------------------------------------------------------------------------
// 5. Gradient suite
// ---------------------------------------------------------------------------

struct GradSuite {
  std::vector<std::pair<std::string, double>> results;

  void add(const std::string& name, const GradReport& r) { results.emplace_back(name, r.worst()); }
  void add(const std::string& name, const std::function<double()>& loss, std::vector<GradProbe> probes) {
    add(name, grad_check(loss, probes, 1e-3));
  }
};

template <typename Module>
void module_check(GradSuite& suite, const std::string& name, Module& m, Tensor& x, const Shape& out,
                  const std::function<Tensor()>& fwd, const std::function<Tensor(const Tensor&)>& bwd, Rng& rng) {
  testing::ProbeLoss loss(out, rng);
  testing::zero_grads(m);
  const Tensor dx = bwd(loss.coeffs);
  auto probes = testing::param_probes(m, name);
  probes.push_back({"x", x.values(), dx.values()});
  suite.add(name, [&] { return loss(fwd()); }, probes);
}

Outcome gradients() {
  GradSuite suite;
  Rng rng(55);
  {
    Tensor w = random_tensor({3, 4}, rng), b = random_tensor({3}, rng), x = random_tensor({4}, rng);
    Tensor c = random_tensor({3}, rng);
    const auto g = linear_backward(w, x.values(), c.values());
    suite.add("linear", [&] {
      const auto y = linear(w, b.values(), x.values());
      return std::inner_product(y.begin(), y.end(), c.data(), 0.0);
    }, {{"w", w.values(), g.weights.values()}, {"b", b.values(), g.bias}, {"x", x.values(), g.input}});
  }
  {
    Tensor z = random_tensor({7}, rng, -2, 2), c = random_tensor({7}, rng);
    const IndexGroups groups{{0, 2, 4, 6}, {1, 3, 5}};
    const auto g = grouped_softmax_backward(grouped_softmax(z.values(), groups), c.values(), groups);
    suite.add("softmax", [&] {
      const auto p = grouped_softmax(z.values(), groups);
      return std::inner_product(p.begin(), p.end(), c.data(), 0.0);
    }, {{"logits", z.values(), g}});
  }
  {
    Tensor map = random_tensor({5, 6, 3}, rng), c = random_tensor({3}, rng);
    Tensor loc(Shape{2}, std::vector<Real>{0.37, 0.61});
    const auto g = bilinear_sample_backward(map, loc[0], loc[1], c.values());
    std::vector<Real> gloc{g.u, g.v};
    suite.add("bilinear", [&] {
      const auto s = bilinear_sample(map, loc[0], loc[1]);
      return std::inner_product(s.begin(), s.end(), c.data(), 0.0);
    }, {{"map", map.values(), g.map.values()}, {"uv", loc.values(), gloc}});
  }
  {
    LayerNorm ln(6);
    rng.fill_uniform(ln.gamma.value, 0.5, 1.5);
    rng.fill_uniform(ln.beta.value, -1, 1);
    Tensor x = random_tensor({3, 6}, rng);
    LayerNorm::Cache cache;
    ln.forward(x, &cache);
    module_check(suite, "layer_norm", ln, x, {3, 6}, [&] { return ln.forward(x, nullptr); },
                 [&](const Tensor& g) { return ln.backward(cache, g); }, rng);
  }
  {
    Conv2d conv(2, 3, 3, 2, 1);
    conv.init(rng);
    rng.fill_uniform(conv.bias.value, -1, 1);
    Tensor x = random_tensor({4, 6, 2}, rng);
    module_check(suite, "conv2d", conv, x, {conv.output_extent(4), conv.output_extent(6), 3},
                 [&] { return conv.forward(x); }, [&](const Tensor& g) { return conv.backward(x, g); }, rng);
  }
  {
    Tensor x = random_tensor({3, 4, 2}, rng);
    testing::ProbeLoss loss({9, 12, 2}, rng);
    const Tensor g = upsample_bilinear_backward(loss.coeffs, 3, 4, 3);
    suite.add("upsample", [&] { return loss(upsample_bilinear(x, 3)); }, {{"x", x.values(), g.values()}});
  }
  for (auto [units, margin, name] : {std::tuple{attention::OffsetUnits::kFeaturePixels, 0.002, "mvaa_pixels"},
                                     std::tuple{attention::OffsetUnits::kNormalized, 0.012, "mvaa_normalized"}}) {
    auto c = testing::generic_mvaa_case(units, margin);
    testing::ProbeLoss loss({5, 4}, rng);
    attention::MvaaCache cache;
    attention::mvaa_forward(c.queries, c.pyramid, c.projections, c.params, &cache);
    testing::zero_grads(c.params);
    const auto g = attention::mvaa_backward(loss.coeffs, c.queries, c.pyramid, c.projections, c.params, cache);
    auto probes = testing::param_probes(c.params, name);
    probes.push_back({"queries", c.queries.values(), g.queries.values()});
    for (std::size_t i = 0; i < c.pyramid.maps.size(); ++i)
      probes.push_back({"pyramid", c.pyramid.maps[i].values(), g.pyramid.maps[i].values()});
    suite.add(name, [&] { return loss(attention::mvaa_forward(c.queries, c.pyramid, c.projections, c.params, nullptr)); },
              probes);
  }
  {
    attention::PolarAttention pa(4, 2);
    pa.init(rng);
    for (Linear* l : {&pa.query, &pa.key, &pa.value, &pa.output}) rng.fill_uniform(l->bias.value, -1, 1);
    const attention::EyeLayout lay{3, 4};
    Tensor x = random_tensor({12, 4}, rng);
    attention::PolarAttention::Cache cache;
    pa.forward(x, lay, &cache);
    module_check(suite, "polar_attention", pa, x, {12, 4}, [&] { return pa.forward(x, lay, nullptr); },
                 [&](const Tensor& g) { return pa.backward(x, lay, cache, g); }, rng);
  }
  {
    const attention::EyeLayout lay{3, 5};
    for (std::uint64_t seed = 24;; ++seed) {
      Rng r(seed);
      attention::DeformableSelfAttention dsa(4, 2, 2);
      dsa.init(r);
      r.fill_uniform(dsa.offsets.weight.value, -0.5, 0.5);
      r.fill_uniform(dsa.weights.weight.value, -1, 1);
      Tensor x = random_tensor({15, 4}, r);
      attention::DeformableSelfAttention::Cache cache;
      dsa.forward(x, lay, &cache);
      if (testing::dsa_location_margin(lay, cache) < 0.002) continue;
      module_check(suite, "deformable_self_attention", dsa, x, {15, 4}, [&] { return dsa.forward(x, lay, nullptr); },
                   [&](const Tensor& g) { return dsa.backward(x, lay, cache, g); }, r);
      break;
    }
  }
  {
    attention::FfnDwConv ffn(4, 6);
    ffn.init(rng);
    ffn.dwconv.init(rng);
    const attention::EyeLayout lay{3, 4};
    Tensor x = random_tensor({12, 4}, rng);
    attention::FfnDwConv::Cache cache;
    ffn.forward(x, lay, &cache);
    module_check(suite, "ffn", ffn, x, {12, 4}, [&] { return ffn.forward(x, lay, nullptr); },
                 [&](const Tensor& g) { return ffn.backward(x, lay, cache, g); }, rng);
  }
  {
    decoder::ToyPyramid p(3, 3, 2);
    p.init(rng);
    std::vector<Tensor> imgs{random_tensor({8, 8, 3}, rng, 0, 1)};
    decoder::ToyPyramid::Cache cache;
    const auto maps = p.forward(imgs, &cache);
    attention::FeaturePyramid coeffs = maps.zeros_like();
    for (auto& m : coeffs.maps) rng.fill_uniform(m, -1, 1);
    testing::zero_grads(p);
    p.backward(cache, coeffs);
    suite.add("pyramid", [&] {
      const auto out = p.forward(imgs, nullptr);
      double s = 0;
      for (std::size_t i = 0; i < out.maps.size(); ++i)
        for (std::size_t j = 0; j < out.maps[i].size(); ++j) s += coeffs.maps[i][j] * out.maps[i][j];
      return s;
    }, testing::param_probes(p, "pyramid"));
  }
  {
    const auto grid = eyes::build_eye_grid(2, 4, 1.5, 5.0, 0.0);
    bool done = false;
    for (std::uint64_t seed = 40; seed < 400 && !done; ++seed) {
      Rng r(seed);
      auto dec = testing::micro_decoder(seed, testing::micro_config(), grid);
      const auto scene = testing::random_scene(r, 8);
      decoder::BackTracingDecoder::Cache cache;
      const Tensor y = dec.forward(scene, &cache);
      if (testing::stack_margin(dec, cache) < 0.005) continue;
      testing::zero_grads(dec);
      dec.backward(Tensor(y.shape(), 1.0), cache);
      suite.add("decoder", [&] {
        const Tensor out = decoder::ego3rt_forward(scene, dec);
        return std::accumulate(out.values().begin(), out.values().end(), 0.0);
      }, testing::param_probes(dec, "decoder"));
      done = true;
    }
    if (!done) suite.results.emplace_back("decoder (no kink-free draw)", std::numeric_limits<double>::infinity());
  }
  {
    const auto grid = eyes::build_eye_grid(5, 9, 1, 6, 0);
    eyes::BevSampler sampler(grid, eyes::BevGrid{14, 0.8});
    Tensor f = random_tensor({grid.eye_count(), 3}, rng);
    testing::ProbeLoss loss({14, 14, 3}, rng);
    const Tensor g = sampler.backward(loss.coeffs);
    suite.add("bev_sample", [&] { return loss(sampler.forward(f).features); }, {{"eyes", f.values(), g.values()}});
  }
  {
    harness::BevTransform tf;
    tf.flip_x = true;
    tf.rotation = 0.3;
    tf.scale = 1.04;
    const harness::BevWarp warp(tf, eyes::BevGrid{12, 0.5});
    Tensor m = random_tensor({12, 12, 2}, rng);
    testing::ProbeLoss loss({12, 12, 2}, rng);
    const Tensor g = warp.backward(loss.coeffs);
    suite.add("bev_warp", [&] { return loss(warp.forward(m)); }, {{"map", m.values(), g.values()}});
  }
  {
    heads::BevEncoder enc(8, 2);
    enc.init(rng);
    Tensor x = random_tensor({5, 5, 8}, rng);
    heads::BevEncoder::Cache cache;
    enc.forward(x, &cache);
    module_check(suite, "encoder", enc, x, {5, 5, 8}, [&] { return enc.forward(x, nullptr); },
                 [&](const Tensor& g) { return enc.backward(cache, g); }, rng);
  }
  {
    heads::DetectionHead head(4, {2, 1});
    head.init(rng);
    Tensor x = random_tensor({4, 4, 4}, rng);
    heads::DetectionHead::Cache cache;
    const auto out = head.forward(x, &cache);
    heads::DetectionOutput coeffs;
    for (const auto& t : out.heat_logits) coeffs.heat_logits.push_back(random_tensor(t.shape(), rng));
    for (const auto& t : out.regression) coeffs.regression.push_back(random_tensor(t.shape(), rng));
    testing::zero_grads(head);
    const Tensor dx = head.backward(x, cache, coeffs);
    auto probes = testing::param_probes(head, "detection");
    probes.push_back({"x", x.values(), dx.values()});
    suite.add("detection_head", [&] {
      const auto o = head.forward(x, nullptr);
      double s = 0;
      for (std::size_t g = 0; g < o.heat_logits.size(); ++g) {
        for (std::size_t i = 0; i < o.heat_logits[g].size(); ++i) s += coeffs.heat_logits[g][i] * o.heat_logits[g][i];
        for (std::size_t i = 0; i < o.regression[g].size(); ++i) s += coeffs.regression[g][i] * o.regression[g][i];
      }
      return s;
    }, probes);
  }
  {
    heads::SegmentationHead head(4, 3, 2, 3);
    head.init(rng);
    Tensor x = random_tensor({3, 3, 4}, rng);
    heads::SegmentationHead::Cache cache;
    head.forward(x, &cache);
    module_check(suite, "segmentation_head", head, x, {9, 9, 2}, [&] { return head.forward(x, nullptr); },
                 [&](const Tensor& g) { return head.backward(x, cache, g); }, rng);
  }
  {
    Tensor z = random_tensor({4, 4, 2}, rng, -3, 3), y = random_tensor({4, 4, 2}, rng, 0, 0.9);
    y[5] = y[20] = 1;
    Tensor g;
    heads::focal_loss_logits(z, y, 2, 4, heads::positive_count(y), &g);
    suite.add("focal_loss", [&] { return heads::focal_loss_logits(z, y, 2, 4, heads::positive_count(y)); },
              {{"logits", z.values(), g.values()}});
  }
  {
    Tensor reg = random_tensor({4, 4, 10}, rng);
    std::vector<heads::ObjectTarget> objs;
    for (std::size_t k = 0; k < 3; ++k) {
      heads::ObjectTarget o{k, 3 - k, {}};
      for (auto& v : o.regression) v = rng.uniform(-1, 1);
      objs.push_back(o);
    }
    Tensor g(reg.shape());
    heads::box_l1_loss(reg, objs, &g);
    suite.add("box_l1_loss", [&] { return heads::box_l1_loss(reg, objs); }, {{"regression", reg.values(), g.values()}});
  }
  {
    Tensor z = random_tensor({5, 5, 2}, rng, -4, 4), t(Shape{5, 5, 2});
    for (auto& v : t.values()) v = rng.bernoulli(0.4) ? 1 : 0;
    std::vector<std::uint8_t> valid(25);
    for (auto& v : valid) v = rng.bernoulli(0.7);
    Tensor g(z.shape());
    heads::masked_bce(z, t, valid, 1, &g);
    suite.add("masked_bce", [&] { return heads::masked_bce(z, t, valid, 1); }, {{"logits", z.values(), g.values()}});
  }
  {
    auto c = testing::random_loss_case(rng);
    heads::LossGrads g;
    heads::total_loss(c.det, c.seg, c.det_targets, c.seg_targets, c.cfg, &g);
    std::vector<GradProbe> probes;
    for (std::size_t k = 0; k < c.det.heat_logits.size(); ++k) {
      probes.push_back({"heat", c.det.heat_logits[k].values(), g.detection.heat_logits[k].values()});
      probes.push_back({"regression", c.det.regression[k].values(), g.detection.regression[k].values()});
    }
    probes.push_back({"segmentation", c.seg.values(), g.segmentation.values()});
    suite.add("total_loss", [&] { return heads::total_loss(c.det, c.seg, c.det_targets, c.seg_targets, c.cfg).total; },
              probes);
  }

  const auto worst = std::max_element(suite.results.begin(), suite.results.end(),
                                      [](const auto& a, const auto& b) { return a.second < b.second; });
  std::size_t failing = 0;
  std::string names;
  for (const auto& [name, err] : suite.results)
    if (!(err < 1e-4)) {
      ++failing;
      names += " " + name;
    }
  std::string detail = std::to_string(suite.results.size()) + " operations, worst " + worst->first + " " +
                       fmt("%.3g", worst->second);
  if (failing) detail += "; failing:" + names;
  return {failing == 0, detail};
}

// ---------------------------------------------------------------------------
// 6. Loop-nest oracle equivalence
// ---------------------------------------------------------------------------

Outcome oracles() {
  double mvaa = 0, dsa = 0, dec = 0;
  for (auto units : {attention::OffsetUnits::kFeaturePixels, attention::OffsetUnits::kNormalized}) {
    Rng rng(8);
    auto p = testing::random_params(testing::micro_shape(units), rng);
    if (units == attention::OffsetUnits::kNormalized) {
      for (auto& b : p.offset_bias.value.values()) b *= 0.05;
      for (auto& w : p.offset_weight.value.values()) w *= 0.1;
    }
    const auto pyr = testing::random_pyramid(2, 2, 8, 12, 3, rng);
    auto proj = testing::random_projections(6, 2, rng, 0.7);
    const Tensor y = random_tensor({6, 4}, rng);
    mvaa = std::max(mvaa, max_abs_diff(attention::mvaa_forward(y, pyr, proj, p, nullptr),
                                       testing::mvaa_oracle(y, pyr, proj, p)));
  }
  {
    Rng rng(23);
    attention::DeformableSelfAttention m(6, 2, 3);
    m.init(rng);
    rng.fill_uniform(m.offsets.weight.value, -0.8, 0.8);
    rng.fill_uniform(m.weights.weight.value, -1, 1);
    for (Linear* l : {&m.value, &m.weights, &m.output}) rng.fill_uniform(l->bias.value, -1, 1);
    const attention::EyeLayout lay{4, 6};
    const Tensor x = random_tensor({24, 6}, rng);
    dsa = max_abs_diff(m.forward(x, lay, nullptr), testing::dsa_oracle(x, lay, m));
  }
  for (bool pe : {false, true}) {
    Rng rng(12);
    auto cfg = testing::micro_config();
    cfg.positional_encoding = pe;
    const auto d = testing::micro_decoder(12, cfg);
    const auto scene = testing::random_scene(rng);
    dec = std::max(dec, max_abs_diff(decoder::ego3rt_forward(scene, d), testing::decoder_oracle(d, scene)));
  }
  return {mvaa < 1e-8 && dsa < 1e-8 && dec < 1e-8,
          "max abs diff mvaa " + fmt("%.3g", mvaa) + ", self-attention " + fmt("%.3g", dsa) + ", full forward " +
              fmt("%.3g", dec)};
}

// ---------------------------------------------------------------------------
// 7. Ray isolation of polar attention
// ---------------------------------------------------------------------------

Outcome ray_isolation() {
  Rng rng(77);
  attention::PolarAttention pa(8, 2);
  pa.init(rng);
  const attention::EyeLayout lay{8, 32};
  const std::size_t N = lay.eyes();
  const Tensor x = random_tensor({N, 8}, rng);
  const Tensor base = pa.forward(x, lay, nullptr);
  std::size_t leaked = 0, unchanged_own = 0, trials = 0;
  for (std::size_t eye = 0; eye < N; eye += 5, ++trials) {
    Tensor x2 = x;
    for (auto& v : x2.row(eye)) v += rng.uniform(0.1, 1);
    const Tensor out = pa.forward(x2, lay, nullptr);
    const std::size_t ray = eye % lay.rays;
    for (std::size_t n = 0; n < N; ++n) {
      const bool same = std::equal(out.row(n).begin(), out.row(n).end(), base.row(n).begin());
      if (n % lay.rays != ray && !same) ++leaked;
      if (n == eye && same) ++unchanged_own;
    }
  }
  return {leaked == 0 && unchanged_own == 0, std::to_string(trials) + " perturbed eyes, changed rows off the ray " +
                                                 std::to_string(leaked)};
}

// ---------------------------------------------------------------------------
// 8. BEV sampler
// ---------------------------------------------------------------------------

Outcome bev_sampler() {
  double worst = 0;
  std::size_t mask_mismatch = 0, cells = 0;
  struct Case {
    std::size_t radial, rays;
    Real r_min, r_max;
    eyes::BevGrid bev;
  };
  const Case cases[] = {{8, 32, 1, 8 * std::sqrt(Real(2)), {32, 0.5}},
                        {5, 9, 1, 6, {14, 0.8}},
                        {3, 12, 2.5, 7, {40, 0.4}}};
  for (const auto& c : cases) {
    const auto grid = eyes::build_eye_grid(c.radial, c.rays, c.r_min, c.r_max, 0);
    for (Real value : {Real(-1.75), Real(0.3), Real(12.5)}) {
      const Tensor f(Shape{grid.eye_count(), 3}, value);
      const auto s = eyes::bev_sample(f, grid, c.bev);
      for (std::size_t cell = 0; cell < c.bev.side * c.bev.side; ++cell) {
        const auto [x, y] = c.bev.cell_center(cell / c.bev.side, cell % c.bev.side);
        const Real rho = std::hypot(x, y);
        const bool inside = rho >= c.r_min && rho <= c.r_max;
        mask_mismatch += (s.valid[cell] != 0) != inside;
        if (inside)
          for (std::size_t k = 0; k < 3; ++k) worst = std::max(worst, std::abs(s.features[cell * 3 + k] - value));
        ++cells;
      }
    }
  }
  return {worst < 1e-9 && mask_mismatch == 0, std::to_string(cells) + " cells, max abs error " + fmt("%.3g", worst) +
                                                  ", mask mismatches " + std::to_string(mask_mismatch)};
}

// ---------------------------------------------------------------------------
// 9, 10. Training on the default desk-scale run
// ---------------------------------------------------------------------------

struct RunSummary {
  harness::EvalResult eval;
  std::string loss_log;
  std::string metrics;
  double seconds = 0;
  std::size_t steps = 0;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunSummary default_run(const fs::path& dir) {
  harness::RunConfig cfg = harness::RunConfig::defaults();
  cfg.output_dir = dir.string();
  fs::remove_all(dir);
  const auto start = std::chrono::steady_clock::now();
  const harness::TrainResult tr = harness::train(cfg, 1);
  const harness::LoadedCheckpoint ck = harness::load_checkpoint(tr.checkpoint, &cfg);
  const auto scenes = harness::make_scene_set(cfg, 1);
  RunSummary r;
  r.eval = harness::evaluate(ck.model, scenes, cfg, 1);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.steps = tr.log.size();
  harness::write_eval(dir / "eval", r.eval);
  r.loss_log = read_file(dir / "loss.csv");
  r.metrics = read_file(dir / "eval" / "metrics.kv");
  return r;
}

Outcome overfit(const fs::path& out) {
  const RunSummary r = default_run(out / "overfit");
  const auto& iou = r.eval.report.iou;
  bool ok = r.steps <= 2000 && r.seconds < 600 && !iou.empty() && r.eval.centers_within_cell == r.eval.truth.size();
  std::string detail = std::to_string(r.steps) + " steps in " + fmt("%.0f", r.seconds) + " s; IoU";
  for (std::size_t e = 0; e < iou.size(); ++e) {
    ok = ok && iou[e] >= 0.85;
    detail += " " + r.eval.report.element_names[e] + " " + fmt("%.3f", iou[e]);
  }
  detail += "; centers within one cell " + std::to_string(r.eval.centers_within_cell) + "/" +
            std::to_string(r.eval.truth.size());
  return {ok, detail};
}

Outcome determinism(const fs::path& out) {
  const RunSummary a = default_run(out / "replay_a");
  const RunSummary b = default_run(out / "replay_b");
  const bool logs = !a.loss_log.empty() && a.loss_log == b.loss_log;
  const bool metrics = !a.metrics.empty() && a.metrics == b.metrics;
  return {logs && metrics, std::string("loss logs ") + (logs ? "identical" : "differ") + " (" +
                               std::to_string(a.steps) + " steps), final metrics " +
                               (metrics ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ego3rt acceptance checks"};
  int only = 0;
  std::string out = (fs::temp_directory_path() / "ego3rt_acceptance").string();
  app.add_option("--criterion", only, "Run one criterion (1-10); default all")->check(CLI::Range(1, 10));
  app.add_option("--out", out, "Directory for the training runs of criteria 9 and 10");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"NDS reproduces the reference rows", nds_rows},
      {"projection matches the homogeneous oracle", projection},
      {"attention weights normalize per head", normalization},
      {"offset bias norms and zero gradient", offset_bias},
      {"finite-difference gradient suite", gradients},
      {"loop-nest oracle equivalence", oracles},
      {"polar attention ray isolation", ray_isolation},
      {"BEV sampler constants and annulus", bev_sampler},
      {"end-to-end overfit", [&] { return overfit(out); }},
      {"training determinism", [&] { return determinism(out); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("criterion %zu %s: %s (%s)\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return all ? 0 : 1;
}
