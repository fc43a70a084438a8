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

namespace ego3rt::attention {

// Eye features as an R x S map: row i is ring i, column j is ray j, flat
// index i * S + j. All blocks below take and return N x C with N = R * S.
struct EyeLayout {
  std::size_t rings = 0;  // R
  std::size_t rays = 0;   // S

  std::size_t eyes() const { return rings * rays; }
};

// Multi-head scaled dot-product attention restricted to the R eyes of each ray.
class PolarAttention {
 public:
  struct Cache {
    Tensor q, k, v;   // N x C
    Tensor probs;     // S x heads x R x R
    Tensor context;   // N x C, before the output projection
  };

  PolarAttention() = default;
  PolarAttention(std::size_t channels, std::size_t heads);

  void init(Rng& rng, double gain = 1.0);

  Tensor forward(const Tensor& x, const EyeLayout& layout, Cache* cache) const;
  Tensor backward(const Tensor& x, const EyeLayout& layout, const Cache& cache,
                  const Tensor& grad_out);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t heads() const { return heads_; }

  Linear query;
  Linear key;
  Linear value;
  Linear output;

 private:
  std::size_t channels_ = 0;
  std::size_t heads_ = 1;
};

// Single-map deformable attention over the R x S eye map. Each eye predicts
// `points` offsets and weights per head around its own (ring, ray) cell.
// Offsets are in cell units; the ray axis wraps, the ring axis clamps.
class DeformableSelfAttention {
 public:
  struct Cache {
    Tensor values;      // N x C, value projection of the input
    Tensor weights;     // N x (heads * points), softmax per head
    Tensor offsets;     // N x (heads * points * 2), {ray, ring} per point
    Tensor aggregated;  // N x C
  };

  DeformableSelfAttention() = default;
  DeformableSelfAttention(std::size_t channels, std::size_t heads, std::size_t points);

  // Offset bias gets the same fixed-norm spread as the cross-attention bias,
  // but here it stays trainable.
  void init(Rng& rng, double gain = 1.0);

  Tensor forward(const Tensor& x, const EyeLayout& layout, Cache* cache) const;
  Tensor backward(const Tensor& x, const EyeLayout& layout, const Cache& cache,
                  const Tensor& grad_out);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t heads() const { return heads_; }
  std::size_t points() const { return points_; }

  Linear value;
  Linear offsets;
  Linear weights;
  Linear output;

 private:
  std::size_t channels_ = 0;
  std::size_t heads_ = 1;
  std::size_t points_ = 1;
};

// expand -> 3x3 depthwise conv (ray axis periodic, ring axis zero padded)
// -> GELU -> contract. The residual is added by the caller.
class FfnDwConv {
 public:
  struct Cache {
    Tensor expanded;  // R x S x hidden
    Tensor conv;      // R x S x hidden, pre-activation
    Tensor activated;
  };

  FfnDwConv() = default;
  FfnDwConv(std::size_t channels, std::size_t hidden);

  void init(Rng& rng, double gain = 1.0);

  Tensor forward(const Tensor& x, const EyeLayout& layout, Cache* cache) const;
  Tensor backward(const Tensor& x, const EyeLayout& layout, const Cache& cache,
                  const Tensor& grad_out);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  Linear expand;
  DepthwiseConv2d dwconv;
  Linear contract;

 private:
  std::size_t channels_ = 0;
  std::size_t hidden_ = 0;
};

}  // namespace ego3rt::attention
