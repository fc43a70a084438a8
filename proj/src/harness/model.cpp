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

#include "ego3rt/harness/model.hpp"

#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/rng.hpp"

namespace ego3rt::harness {

eyes::EyeGrid EyeGridConfig::build() const {
  return eyes::build_eye_grid(radial_count, ray_count, r_min, r_max, height);
}

void ModelConfig::validate() const {
  decoder.validate();
  if (eyes.radial_count == 0 || eyes.ray_count == 0) throw ConfigError("model: eye grid needs rings and rays");
  if (!(eyes.r_min > 0 && eyes.r_max > eyes.r_min)) throw ConfigError("model: eye radii need 0 < r_min < r_max");
  bev.validate();
  if (encoder_blocks == 0) throw ConfigError("model: encoder needs at least one block");
  if (seg_hidden == 0 || seg_ratio == 0) throw ConfigError("model: segmentation hidden width and ratio must be positive");
  if (classes_per_group.empty()) throw ConfigError("model: no detection groups");
  for (auto n : classes_per_group)
    if (n == 0) throw ConfigError("model: empty detection group");
  if (elements == 0) throw ConfigError("model: no segmentation elements");
}

Ego3rtModel::Ego3rtModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const eyes::EyeGrid grid = config_.eyes.build();
  decoder = decoder::BackTracingDecoder(config_.decoder, grid);
  sampler_ = eyes::BevSampler(grid, config_.bev);
  encoder = heads::BevEncoder(config_.decoder.channels, config_.encoder_blocks);
  detection = heads::DetectionHead(config_.decoder.channels, config_.classes_per_group);
  segmentation =
      heads::SegmentationHead(config_.decoder.channels, config_.seg_hidden, config_.elements, config_.seg_ratio);
}

void Ego3rtModel::init(std::uint64_t seed) {
  Rng d(mix_seed(seed, 1)), e(mix_seed(seed, 2)), h(mix_seed(seed, 3)), s(mix_seed(seed, 4));
  decoder.init(d);
  encoder.init(e);
  detection.init(h);
  segmentation.init(s);
}

ModelOutput Ego3rtModel::forward(const decoder::SceneInput& scene, const BevWarp* warp, Cache* cache) const {
  ModelOutput out;
  out.eye_features = decoder.forward(scene, cache ? &cache->decoder : nullptr);
  eyes::BevSample bev = sampler_.forward(out.eye_features);
  if (warp) {
    out.bev = warp->forward(bev.features);
    out.bev_valid = warp->warp_mask(bev.valid);
  } else {
    out.bev = std::move(bev.features);
    out.bev_valid = std::move(bev.valid);
  }
  Tensor encoded = encoder.forward(out.bev, cache ? &cache->encoder : nullptr);
  out.detection = detection.forward(encoded, cache ? &cache->detection : nullptr);
  out.seg_logits = segmentation.forward(encoded, cache ? &cache->segmentation : nullptr);
  if (cache) {
    cache->encoder_input = out.bev;
    cache->encoded = std::move(encoded);
    cache->warp = warp;
  }
  return out;
}

void Ego3rtModel::backward(const heads::LossGrads& grads, Cache& cache) {
  Tensor g = detection.backward(cache.encoded, cache.detection, grads.detection);
  if (!grads.segmentation.empty()) {
    const Tensor gs = segmentation.backward(cache.encoded, cache.segmentation, grads.segmentation);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs[i];
  }
  Tensor g_bev = encoder.backward(cache.encoder, g);
  if (cache.warp) g_bev = cache.warp->backward(g_bev);
  decoder.backward(sampler_.backward(g_bev), cache.decoder);
}

void Ego3rtModel::visit(const ParamVisitor& fn) {
  decoder.visit("decoder", fn);
  encoder.visit("encoder", fn);
  detection.visit("detection", fn);
  segmentation.visit("segmentation", fn);
}

void Ego3rtModel::zero_grads() {
  visit([](const std::string&, Param& p) { p.zero_grad(); });
}

}  // namespace ego3rt::harness
