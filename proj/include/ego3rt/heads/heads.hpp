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

#include "ego3rt/numerics/layers.hpp"
#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt::heads {

// Residual bottleneck: x + expand(GELU(conv3x3(GELU(reduce(x))))).
class Bottleneck {
 public:
  struct Cache {
    Tensor reduced, activated1, mid, activated2;
  };

  Bottleneck() = default;
  Bottleneck(std::size_t channels, std::size_t width);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& x, const Cache& cache, const Tensor& grad_out);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  Conv2d reduce;
  Conv2d mid;
  Conv2d expand;
};

// Stack of bottleneck blocks over the square BEV map. Invalid cells arrive
// zeroed by the sampler.
class BevEncoder {
 public:
  struct Cache {
    std::vector<Tensor> inputs;
    std::vector<Bottleneck::Cache> blocks;
  };

  BevEncoder() = default;
  BevEncoder(std::size_t channels, std::size_t blocks);

  void init(Rng& rng);
  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::vector<Bottleneck> blocks;
};

// Regression channel order.
enum RegressionChannel : std::size_t {
  kOffsetX = 0,  // (x - cell center x) / cell size
  kOffsetY,      // (y - cell center y) / cell size
  kHeight,       // z, meters
  kLogLength,
  kLogHeight,
  kLogWidth,
  kSinYaw,
  kCosYaw,
  kVelX,
  kVelY,
  kRegressionChannels
};

struct DetectionOutput {
  std::vector<Tensor> heat_logits;  // per group: side x side x classes in group
  std::vector<Tensor> regression;   // per group: side x side x 10
};

// Shared 3x3 conv + GELU, then per sub-task group a 1x1 heatmap conv and a
// 1x1 regression conv.
class DetectionHead {
 public:
  struct Cache {
    Tensor shared;     // pre-activation
    Tensor activated;
  };

  DetectionHead() = default;
  DetectionHead(std::size_t channels, const std::vector<std::size_t>& classes_per_group);

  // Heatmap bias -2.19 (prior probability about 0.1).
  void init(Rng& rng);
  DetectionOutput forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& x, const Cache& cache, const DetectionOutput& grad);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t groups() const { return heat.size(); }

  Conv2d shared;
  std::vector<Conv2d> heat;
  std::vector<Conv2d> regression;
};

// Elementwise sigmoid of a heatmap logit map.
Tensor heatmap(const Tensor& logits);

// Per map element: 1x1 conv -> LayerNorm -> GELU -> 1x1 conv to one logit,
// then bilinear upsampling by `ratio`. Output: (side * ratio)^2 x elements.
class SegmentationHead {
 public:
  struct Branch {
    Conv2d reduce;
    LayerNorm norm;
    Conv2d logit;
  };
  struct Cache {
    std::vector<Tensor> reduced;
    std::vector<LayerNorm::Cache> norms;
    std::vector<Tensor> normalized;
    std::vector<Tensor> activated;
    std::size_t side = 0;
  };

  SegmentationHead() = default;
  SegmentationHead(std::size_t channels, std::size_t hidden, std::size_t elements,
                   std::size_t ratio);

  void init(Rng& rng);
  // Throws ConfigError unless side * ratio == target_side.
  void check_target(std::size_t side, std::size_t target_side) const;
  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Tensor& x, const Cache& cache, const Tensor& grad_out);
  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t ratio() const { return ratio_; }
  std::size_t elements() const { return branches.size(); }

  std::vector<Branch> branches;

 private:
  std::size_t ratio_ = 1;
};

}  // namespace ego3rt::heads
