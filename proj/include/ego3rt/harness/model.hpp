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

#include <string>
#include <vector>

#include "ego3rt/decoder/decoder.hpp"
#include "ego3rt/harness/augment.hpp"
#include "ego3rt/heads/heads.hpp"
#include "ego3rt/heads/losses.hpp"

namespace ego3rt::harness {

struct EyeGridConfig {
  std::size_t radial_count = 8;
  std::size_t ray_count = 32;
  Real r_min = 1;
  Real r_max = 8 * 1.4142135623730951;  // BEV half-diagonal
  Real height = 0;

  eyes::EyeGrid build() const;
};

struct ModelConfig {
  decoder::DecoderConfig decoder;
  EyeGridConfig eyes;
  eyes::BevGrid bev{32, 0.5};
  std::size_t encoder_blocks = 2;
  std::size_t seg_hidden = 16;
  std::size_t seg_ratio = 3;
  std::vector<std::size_t> classes_per_group{1, 1};
  std::size_t elements = 2;

  void validate() const;
};

struct ModelOutput {
  Tensor eye_features;  // N_eyes x C
  Tensor bev;           // side x side x C, after the optional warp
  std::vector<std::uint8_t> bev_valid;
  heads::DetectionOutput detection;
  Tensor seg_logits;    // (side * ratio)^2 x elements
};

// Decoder -> BEV sampling -> (optional BEV warp) -> encoder -> heads.
class Ego3rtModel {
 public:
  struct Cache {
    decoder::BackTracingDecoder::Cache decoder;
    Tensor encoder_input;
    heads::BevEncoder::Cache encoder;
    Tensor encoded;
    heads::DetectionHead::Cache detection;
    heads::SegmentationHead::Cache segmentation;
    const BevWarp* warp = nullptr;
  };

  Ego3rtModel() = default;
  explicit Ego3rtModel(const ModelConfig& config);

  void init(std::uint64_t seed);

  // `warp`, when given, must outlive the cache.
  ModelOutput forward(const decoder::SceneInput& scene, const BevWarp* warp, Cache* cache) const;
  // Accumulates every parameter gradient.
  void backward(const heads::LossGrads& grads, Cache& cache);

  void visit(const ParamVisitor& fn);
  void zero_grads();

  const ModelConfig& config() const { return config_; }
  const eyes::BevSampler& sampler() const { return sampler_; }

  decoder::BackTracingDecoder decoder;
  heads::BevEncoder encoder;
  heads::DetectionHead detection;
  heads::SegmentationHead segmentation;

 private:
  ModelConfig config_;
  eyes::BevSampler sampler_;
};

}  // namespace ego3rt::harness
