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

#include "ego3rt/decoder/decoder.hpp"

#include <cmath>

#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/egt_io.hpp"

namespace ego3rt::decoder {

void SceneInput::validate() const {
  rig.validate();
  if (images.size() != rig.view_count()) {
    throw ConfigError("scene: expected one image per camera, got " + std::to_string(images.size()) +
                      " for " + std::to_string(rig.view_count()) + " cameras");
  }
  for (const auto& img : images) {
    if (img.rank() != 3 || img.shape() != images.front().shape()) {
      throw ConfigError("scene: all views must share H x W x C extents");
    }
  }
}

attention::MvaaShape DecoderConfig::mvaa_shape() const {
  attention::MvaaShape s;
  s.channels = channels;
  s.value_channels = pyramid_channels;
  s.heads = heads;
  s.scales = scales;
  s.views = views;
  s.points = points;
  s.offset_units = offset_units;
  return s;
}

void DecoderConfig::validate() const {
  if (layers < 1) throw ConfigError("decoder: need at least one layer");
  if (channels == 0 || pyramid_channels == 0 || ffn_hidden == 0) {
    throw ConfigError("decoder: widths must be positive");
  }
  mvaa_shape().validate();
}

// ---------------------------------------------------------------------------
// ToyPyramid
// ---------------------------------------------------------------------------

ToyPyramid::ToyPyramid(std::size_t in_channels, std::size_t channels, std::size_t scales)
    : scales_(scales) {
  if (scales == 0) throw ConfigError("pyramid: N_scale must be >= 1");
  for (std::size_t l = 0; l < scales; ++l) {
    convs.emplace_back(l == 0 ? in_channels : channels, channels, 3, 2, 1, PadMode::kReplicate);
  }
}

void ToyPyramid::init(Rng& rng) {
  for (auto& c : convs) c.init(rng, 1.5);
}

FeaturePyramid ToyPyramid::forward(const std::vector<Tensor>& images, Cache* cache) const {
  const std::size_t views = images.size();
  FeaturePyramid out(views, scales_);
  if (cache) cache->inputs.assign(views, {});
  const std::size_t stride = std::size_t{1} << scales_;
  for (std::size_t t = 0; t < views; ++t) {
    const Tensor& img = images[t];
    if (img.rank() != 3 || img.extent(0) % stride != 0 || img.extent(1) % stride != 0) {
      throw ConfigError("pyramid: image extents " + shape_string(img.shape()) +
                        " not divisible by total stride " + std::to_string(stride));
    }
    Tensor input = img;
    for (std::size_t l = 0; l < scales_; ++l) {
      Tensor x = convs[l].forward(input);
      if (cache) cache->inputs[t].push_back(std::move(input));
      if (l + 1 < scales_) input = gelu(x);
      out.at(t, l) = std::move(x);
    }
  }
  if (cache) cache->maps = out;
  return out;
}

void ToyPyramid::backward(const Cache& cache, const FeaturePyramid& grad) {
  for (std::size_t t = 0; t < grad.views; ++t) {
    Tensor carry;
    for (std::size_t l = scales_; l-- > 0;) {
      Tensor g = grad.at(t, l);
      if (!carry.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += carry[i];
      }
      Tensor d_input = convs[l].backward(cache.inputs[t][l], g);
      if (l > 0) carry = gelu_backward(cache.maps.at(t, l - 1), d_input);
    }
  }
}

void ToyPyramid::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t l = 0; l < convs.size(); ++l) convs[l].visit(prefix + ".conv" + std::to_string(l), fn);
}

// ---------------------------------------------------------------------------
// DecoderLayer
// ---------------------------------------------------------------------------

DecoderLayer::DecoderLayer(const DecoderConfig& config)
    : norms{LayerNorm(config.channels), LayerNorm(config.channels), LayerNorm(config.channels),
            LayerNorm(config.channels)},
      self_attention(config.channels, config.heads, config.points),
      polar_attention(config.channels, config.heads),
      cross_attention(config.mvaa_shape()),
      ffn(config.channels, config.ffn_hidden) {}

void DecoderLayer::init(Rng& rng) {
  self_attention.init(rng);
  polar_attention.init(rng);
  cross_attention.init(rng);
  ffn.init(rng);
}

void DecoderLayer::zero_outputs() {
  for (Linear* l : {&self_attention.output, &polar_attention.output, &ffn.contract}) {
    l->weight.value.fill(0);
    l->bias.value.fill(0);
  }
  cross_attention.output_proj.value.fill(0);
}

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor DecoderLayer::forward(const Tensor& y, const LayerContext& ctx, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  Tensor x = y;
  for (int b = 0; b < 4; ++b) {
    c.inputs[b] = x;
    c.normalized[b] = norms[b].forward(x, &c.norms[b]);
    const Tensor& n = c.normalized[b];
    Tensor update;
    switch (b) {
      case 0:
        update = self_attention.forward(n, ctx.layout, &c.dsa);
        break;
      case 1:
        update = polar_attention.forward(n, ctx.layout, &c.polar);
        break;
      case 2:
        update = attention::mvaa_forward(n, *ctx.pyramid, *ctx.projections, cross_attention, &c.mvaa);
        break;
      default:
        update = ffn.forward(n, ctx.layout, &c.ffn);
        break;
    }
    add_into(x, update);
  }
  return x;
}

Tensor DecoderLayer::backward(const Tensor& grad_out, const LayerContext& ctx, const Cache& cache,
                              FeaturePyramid& grad_pyramid) {
  Tensor g = grad_out;
  for (int b = 3; b >= 0; --b) {
    const Tensor& n = cache.normalized[b];
    Tensor dn;
    switch (b) {
      case 0:
        dn = self_attention.backward(n, ctx.layout, cache.dsa, g);
        break;
      case 1:
        dn = polar_attention.backward(n, ctx.layout, cache.polar, g);
        break;
      case 2: {
        auto grads = attention::mvaa_backward(g, n, *ctx.pyramid, *ctx.projections, cross_attention,
                                              cache.mvaa);
        for (std::size_t i = 0; i < grad_pyramid.maps.size(); ++i) {
          add_into(grad_pyramid.maps[i], grads.pyramid.maps[i]);
        }
        dn = std::move(grads.queries);
        break;
      }
      default:
        dn = ffn.backward(n, ctx.layout, cache.ffn, g);
        break;
    }
    add_into(g, norms[b].backward(cache.norms[b], dn));
  }
  return g;
}

void DecoderLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
  for (int b = 0; b < 4; ++b) norms[b].visit(prefix + ".norm" + std::to_string(b), fn);
  self_attention.visit(prefix + ".self_attention", fn);
  polar_attention.visit(prefix + ".polar_attention", fn);
  cross_attention.visit(prefix + ".cross_attention", fn);
  ffn.visit(prefix + ".ffn", fn);
}

// ---------------------------------------------------------------------------
// BackTracingDecoder
// ---------------------------------------------------------------------------

Tensor positional_encoding(const eyes::EyeGrid& grid, std::size_t channels) {
  Tensor code(Shape{grid.eye_count(), channels});
  const std::size_t bands = channels / 4;
  for (std::size_t q = 0; q < grid.eye_count(); ++q) {
    const auto& p = grid.positions[q];
    for (std::size_t i = 0; i < bands; ++i) {
      const Real omega = std::pow(Real(100), -static_cast<Real>(i) / static_cast<Real>(bands));
      code.at({q, 4 * i}) = std::sin(omega * p[0]);
      code.at({q, 4 * i + 1}) = std::cos(omega * p[0]);
      code.at({q, 4 * i + 2}) = std::sin(omega * p[1]);
      code.at({q, 4 * i + 3}) = std::cos(omega * p[1]);
    }
  }
  return code;
}

BackTracingDecoder::BackTracingDecoder(const DecoderConfig& config, const eyes::EyeGrid& grid)
    : pyramid(3, config.pyramid_channels, config.scales),
      eye_init(Shape{config.channels}),
      config_(config),
      grid_(grid) {
  config_.validate();
  for (std::size_t l = 0; l < config.layers; ++l) layers.emplace_back(config_);
  if (config_.positional_encoding) position_code_ = positional_encoding(grid_, config_.channels);
}

void BackTracingDecoder::init(Rng& rng) {
  pyramid.init(rng);
  rng.fill_uniform(eye_init.value, -1, 1);
  for (auto& l : layers) l.init(rng);
}

Tensor BackTracingDecoder::initial_embeddings() const {
  Tensor y(Shape{grid_.eye_count(), config_.channels});
  for (std::size_t q = 0; q < grid_.eye_count(); ++q) {
    for (std::size_t c = 0; c < config_.channels; ++c) {
      y.at({q, c}) = eye_init.value[c] + (position_code_.empty() ? Real(0) : position_code_.at({q, c}));
    }
  }
  return y;
}

Tensor BackTracingDecoder::forward(const SceneInput& scene, Cache* cache) const {
  scene.validate();
  if (cache) {
    cache->external_pyramid = false;
    pyramid.forward(scene.images, &cache->pyramid);
    return run_layers(cache->pyramid.maps, scene.rig, cache);
  }
  return run_layers(pyramid.forward(scene.images, nullptr), scene.rig, nullptr);
}

Tensor BackTracingDecoder::forward(const FeaturePyramid& features, const geometry::CameraRig& rig,
                                   Cache* cache) const {
  rig.validate();
  features.validate();
  if (cache) {
    cache->external_pyramid = true;
    cache->pyramid.inputs.clear();
    cache->pyramid.maps = features;
    return run_layers(cache->pyramid.maps, rig, cache);
  }
  return run_layers(features, rig, nullptr);
}

Tensor BackTracingDecoder::run_layers(const FeaturePyramid& features, const geometry::CameraRig& rig,
                                      Cache* cache) const {
  if (rig.view_count() != config_.views || features.views != config_.views) {
    throw ConfigError("decoder: configured for " + std::to_string(config_.views) + " views, got " +
                      std::to_string(rig.view_count()));
  }
  if (features.scales != config_.scales || features.channels() != config_.pyramid_channels) {
    throw ConfigError("decoder: pyramid scales/channels do not match the configuration");
  }
  EyeProjections local_proj;
  EyeProjections& proj = cache ? cache->projections : local_proj;
  proj = attention::project_eyes(rig, grid_.positions);
  const LayerContext ctx{layout(), &features, &proj};
  if (cache) cache->layers.assign(layers.size(), {});
  Tensor y = initial_embeddings();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    y = layers[i].forward(y, ctx, cache ? &cache->layers[i] : nullptr);
  }
  return y;
}

void BackTracingDecoder::backward(const Tensor& grad_eyes, Cache& cache) {
  FeaturePyramid grad_pyramid = cache.pyramid.maps.zeros_like();
  const LayerContext ctx{layout(), &cache.pyramid.maps, &cache.projections};
  Tensor g = grad_eyes;
  for (std::size_t i = layers.size(); i-- > 0;) {
    g = layers[i].backward(g, ctx, cache.layers[i], grad_pyramid);
  }
  if (eye_init.trainable) {
    for (std::size_t q = 0; q < g.extent(0); ++q) {
      for (std::size_t c = 0; c < config_.channels; ++c) eye_init.grad[c] += g.at({q, c});
    }
  }
  if (!cache.external_pyramid) pyramid.backward(cache.pyramid, grad_pyramid);
}

void BackTracingDecoder::visit(const std::string& prefix, const ParamVisitor& fn) {
  pyramid.visit(prefix + ".pyramid", fn);
  fn(prefix + ".eye_init", eye_init);
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + ".layer" + std::to_string(i), fn);
}

Tensor ego3rt_forward(const SceneInput& scene, const BackTracingDecoder& decoder) {
  return decoder.forward(scene, nullptr);
}

// ---------------------------------------------------------------------------
// External pyramid files
// ---------------------------------------------------------------------------

namespace {

std::filesystem::path pyramid_file(const std::filesystem::path& dir, std::size_t t, std::size_t l) {
  return dir / ("feat_v" + std::to_string(t + 1) + "_s" + std::to_string(l + 1) + ".egt");
}

}  // namespace

FeaturePyramid load_pyramid(const std::filesystem::path& dir, std::size_t views, std::size_t scales) {
  FeaturePyramid p(views, scales);
  for (std::size_t t = 0; t < views; ++t) {
    for (std::size_t l = 0; l < scales; ++l) p.at(t, l) = load_egt(pyramid_file(dir, t, l));
  }
  p.validate();
  return p;
}

void save_pyramid(const std::filesystem::path& dir, const FeaturePyramid& pyramid) {
  std::filesystem::create_directories(dir);
  for (std::size_t t = 0; t < pyramid.views; ++t) {
    for (std::size_t l = 0; l < pyramid.scales; ++l) save_egt(pyramid_file(dir, t, l), pyramid.at(t, l));
  }
}

}  // namespace ego3rt::decoder
