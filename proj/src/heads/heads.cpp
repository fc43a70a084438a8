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

#include "ego3rt/heads/heads.hpp"

#include <cmath>

#include "ego3rt/errors.hpp"

namespace ego3rt::heads {

namespace {

// Uniform bound gain / sqrt(fan_in) with this gain keeps GELU activations at
// roughly unit scale (He-uniform).
constexpr double kHeGain = 2.449489742783178;

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

Bottleneck::Bottleneck(std::size_t channels, std::size_t width)
    : reduce(channels, width, 1, 1, 0),
      mid(width, width, 3, 1, 1),
      expand(width, channels, 1, 1, 0) {}

void Bottleneck::init(Rng& rng) {
  reduce.init(rng, kHeGain);
  mid.init(rng, kHeGain);
  expand.init(rng, 0.5);
}

Tensor Bottleneck::forward(const Tensor& x, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.reduced = reduce.forward(x);
  c.activated1 = gelu(c.reduced);
  c.mid = mid.forward(c.activated1);
  c.activated2 = gelu(c.mid);
  Tensor y = expand.forward(c.activated2);
  add_into(y, x);
  return y;
}

Tensor Bottleneck::backward(const Tensor& x, const Cache& cache, const Tensor& grad_out) {
  Tensor g = expand.backward(cache.activated2, grad_out);
  g = gelu_backward(cache.mid, g);
  g = mid.backward(cache.activated1, g);
  g = gelu_backward(cache.reduced, g);
  Tensor dx = reduce.backward(x, g);
  add_into(dx, grad_out);
  return dx;
}

void Bottleneck::visit(const std::string& prefix, const ParamVisitor& fn) {
  reduce.visit(prefix + ".reduce", fn);
  mid.visit(prefix + ".mid", fn);
  expand.visit(prefix + ".expand", fn);
}

BevEncoder::BevEncoder(std::size_t channels, std::size_t count) {
  const std::size_t width = std::max<std::size_t>(channels / 4, 1);
  for (std::size_t i = 0; i < count; ++i) blocks.emplace_back(channels, width);
}

void BevEncoder::init(Rng& rng) {
  for (auto& b : blocks) b.init(rng);
}

Tensor BevEncoder::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 3 || x.extent(0) != x.extent(1)) {
    throw DimensionError("BevEncoder: expected a square map, got " + shape_string(x.shape()));
  }
  if (cache) {
    cache->inputs.assign(blocks.size(), {});
    cache->blocks.assign(blocks.size(), {});
  }
  Tensor y = x;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (cache) cache->inputs[i] = y;
    y = blocks[i].forward(y, cache ? &cache->blocks[i] : nullptr);
  }
  return y;
}

Tensor BevEncoder::backward(const Cache& cache, const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(cache.inputs[i], cache.blocks[i], g);
  return g;
}

void BevEncoder::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].visit(prefix + ".block" + std::to_string(i), fn);
}

// ---------------------------------------------------------------------------
// Detection head
// ---------------------------------------------------------------------------

DetectionHead::DetectionHead(std::size_t channels, const std::vector<std::size_t>& classes_per_group)
    : shared(channels, channels, 3, 1, 1) {
  if (classes_per_group.empty()) throw ConfigError("detection head: no sub-task groups");
  for (std::size_t n : classes_per_group) {
    if (n == 0) throw ConfigError("detection head: empty sub-task group");
    heat.emplace_back(channels, n, 1, 1, 0);
    regression.emplace_back(channels, kRegressionChannels, 1, 1, 0);
  }
}

void DetectionHead::init(Rng& rng) {
  shared.init(rng, kHeGain);
  for (auto& h : heat) {
    h.init(rng, 0.5);
    h.bias.value.fill(-2.19);
  }
  for (auto& r : regression) r.init(rng, 0.5);
}

DetectionOutput DetectionHead::forward(const Tensor& x, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.shared = shared.forward(x);
  c.activated = gelu(c.shared);
  DetectionOutput out;
  for (std::size_t g = 0; g < heat.size(); ++g) {
    out.heat_logits.push_back(heat[g].forward(c.activated));
    out.regression.push_back(regression[g].forward(c.activated));
  }
  return out;
}

Tensor DetectionHead::backward(const Tensor& x, const Cache& cache, const DetectionOutput& grad) {
  Tensor d_act(cache.activated.shape());
  for (std::size_t g = 0; g < heat.size(); ++g) {
    add_into(d_act, heat[g].backward(cache.activated, grad.heat_logits[g]));
    add_into(d_act, regression[g].backward(cache.activated, grad.regression[g]));
  }
  return shared.backward(x, gelu_backward(cache.shared, d_act));
}

void DetectionHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  shared.visit(prefix + ".shared", fn);
  for (std::size_t g = 0; g < heat.size(); ++g) {
    heat[g].visit(prefix + ".heat" + std::to_string(g), fn);
    regression[g].visit(prefix + ".regression" + std::to_string(g), fn);
  }
}

Tensor heatmap(const Tensor& logits) {
  Tensor p(logits.shape());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

// ---------------------------------------------------------------------------
// Segmentation head
// ---------------------------------------------------------------------------

SegmentationHead::SegmentationHead(std::size_t channels, std::size_t hidden, std::size_t elements,
                                   std::size_t ratio)
    : ratio_(ratio) {
  if (ratio == 0) throw ConfigError("segmentation head: upsample ratio must be >= 1");
  if (elements == 0) throw ConfigError("segmentation head: no map elements");
  for (std::size_t e = 0; e < elements; ++e) {
    branches.push_back({Conv2d(channels, hidden, 1, 1, 0), LayerNorm(hidden), Conv2d(hidden, 1, 1, 1, 0)});
  }
}

void SegmentationHead::init(Rng& rng) {
  for (auto& b : branches) {
    b.reduce.init(rng, kHeGain);
    b.logit.init(rng, 1.0);
  }
}

void SegmentationHead::check_target(std::size_t side, std::size_t target_side) const {
  if (side * ratio_ != target_side) {
    throw ConfigError("segmentation head: " + std::to_string(side) + " x " + std::to_string(ratio_) +
                      " does not reach the " + std::to_string(target_side) + " raster");
  }
}

Tensor SegmentationHead::forward(const Tensor& x, Cache* cache) const {
  const std::size_t side = x.extent(0), E = branches.size();
  Cache local;
  Cache& c = cache ? *cache : local;
  c.side = side;
  c.reduced.assign(E, {});
  c.norms.assign(E, {});
  c.normalized.assign(E, {});
  c.activated.assign(E, {});
  Tensor logits(Shape{side, x.extent(1), E});
  for (std::size_t e = 0; e < E; ++e) {
    const auto& b = branches[e];
    c.reduced[e] = b.reduce.forward(x);
    c.normalized[e] = b.norm.forward(c.reduced[e], &c.norms[e]);
    c.activated[e] = gelu(c.normalized[e]);
    const Tensor l = b.logit.forward(c.activated[e]);
    for (std::size_t i = 0; i < l.size(); ++i) logits[i * E + e] = l[i];
  }
  return ratio_ == 1 ? logits : upsample_bilinear(logits, ratio_);
}

Tensor SegmentationHead::backward(const Tensor& x, const Cache& cache, const Tensor& grad_out) {
  const std::size_t E = branches.size(), H = x.extent(0), W = x.extent(1);
  const Tensor g_logits = ratio_ == 1 ? grad_out : upsample_bilinear_backward(grad_out, H, W, ratio_);
  Tensor dx(x.shape());
  for (std::size_t e = 0; e < E; ++e) {
    auto& b = branches[e];
    Tensor g(Shape{H, W, 1});
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = g_logits[i * E + e];
    Tensor ga = b.logit.backward(cache.activated[e], g);
    Tensor gn = gelu_backward(cache.normalized[e], ga);
    Tensor gr = b.norm.backward(cache.norms[e], gn);
    add_into(dx, b.reduce.backward(x, gr));
  }
  return dx;
}

void SegmentationHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t e = 0; e < branches.size(); ++e) {
    const std::string p = prefix + ".element" + std::to_string(e);
    branches[e].reduce.visit(p + ".reduce", fn);
    branches[e].norm.visit(p + ".norm", fn);
    branches[e].logit.visit(p + ".logit", fn);
  }
}

}  // namespace ego3rt::heads
