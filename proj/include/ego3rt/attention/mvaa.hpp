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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ego3rt/eyes/eye_grid.hpp"
#include "ego3rt/geometry/camera.hpp"
#include "ego3rt/numerics/layers.hpp"
#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt::attention {

using geometry::Vec3;

// Multi-view, multi-scale 2D features: map (t, l) is H_l x W_l x C.
struct FeaturePyramid {
  std::size_t views = 0;
  std::size_t scales = 0;
  std::vector<Tensor> maps;  // index t * scales + l

  FeaturePyramid() = default;
  FeaturePyramid(std::size_t views_, std::size_t scales_)
      : views(views_), scales(scales_), maps(views_ * scales_) {}

  Tensor& at(std::size_t view, std::size_t scale) { return maps[view * scales + scale]; }
  const Tensor& at(std::size_t view, std::size_t scale) const { return maps[view * scales + scale]; }
  std::size_t channels() const { return maps.empty() ? 0 : maps.front().extent(2); }

  // Zero-filled pyramid with the same extents.
  FeaturePyramid zeros_like() const;
  // Extents strictly decrease with scale, channels agree across views.
  void validate() const;
};

// Eye embeddings y (N x C) together with their fixed ego positions r.
struct EyeState {
  Tensor embeddings;
  std::vector<Vec3> positions;
};

// Every eye projected into every view, computed once per scene.
struct EyeProjections {
  std::size_t eyes = 0;
  std::size_t views = 0;
  std::vector<Real> u;
  std::vector<Real> v;
  std::vector<std::uint8_t> visible;  // eyes * views

  bool is_visible(std::size_t eye, std::size_t view) const { return visible[eye * views + view]; }
  bool blind(std::size_t eye) const;
  std::span<const std::uint8_t> visible_views(std::size_t eye) const {
    return std::span<const std::uint8_t>(visible).subspan(eye * views, views);
  }
};

EyeProjections project_eyes(const geometry::CameraRig& rig, std::span<const Vec3> positions);

// How the generated offsets are turned into sampling displacements.
// kFeaturePixels: one unit is one cell of the sampled level.
// kNormalized: one unit is the full [0, 1] image extent.
enum class OffsetUnits { kFeaturePixels, kNormalized };

struct MvaaShape {
  std::size_t channels = 32;        // C, eye embedding width
  std::size_t value_channels = 16;  // pyramid channels
  std::size_t heads = 2;
  std::size_t scales = 2;
  std::size_t views = 4;
  std::size_t points = 4;
  OffsetUnits offset_units = OffsetUnits::kFeaturePixels;

  std::size_t head_dim() const { return channels / heads; }
  std::size_t slots() const { return heads * scales * views * points; }
  void validate() const;
};

// Learnable tensors of the adaptive cross-attention.
class MvaaParams {
 public:
  MvaaParams() = default;
  explicit MvaaParams(const MvaaShape& shape);

  void init(Rng& rng);

  const MvaaShape& shape() const { return shape_; }
  // Flat slot index of (head, scale, view, point).
  std::size_t slot(std::size_t h, std::size_t l, std::size_t t, std::size_t k) const {
    return ((h * shape_.scales + l) * shape_.views + t) * shape_.points + k;
  }

  void visit(const std::string& prefix, const ParamVisitor& fn);

  Param attention_weight;  // slots x C
  Param attention_bias;    // slots
  Param offset_weight;     // (slots * 2) x C
  Param offset_bias;       // slots * 2; fixed, never trained
  Param value_proj;        // C x value_channels: head h uses rows [h d, (h+1) d)
  Param output_proj;       // heads x d x d

 private:
  MvaaShape shape_;
};

// Fixed sampling-offset bias: point k (1-based) of every (h, l, t) gets a
// 2-vector of norm exactly k, direction 2 pi (h N_point + k) / (N_h N_point).
// Shape: N_h x N_scale x N_view x N_point x 2.
Tensor init_offset_bias(std::size_t heads, std::size_t scales, std::size_t views,
                        std::size_t points);

struct AttentionWeights {
  std::vector<Real> weights;  // slots, layout of MvaaParams::slot
  bool blind = false;         // no visible view: weights are all zero
};

// Logits W_A y + b_A; invisible views masked; softmax jointly over
// (scale, view, point) per head.
AttentionWeights attention_weights(const MvaaParams& params, std::span<const Real> query,
                                   std::span<const std::uint8_t> visible_views);

// W_r y + b_r, layout slot * 2 + {0: horizontal, 1: vertical}.
std::vector<Real> sampling_offsets(const MvaaParams& params, std::span<const Real> query);

struct MvaaCache {
  Tensor weights;  // N x slots
  Tensor offsets;  // N x slots*2
  Tensor aggregated;  // N x C, per-head weighted value sums before W_h
  std::vector<Tensor> values;  // projected pyramid, index t * scales + l, H_l x W_l x C
  std::vector<std::uint8_t> blind;
};

// Returns the attention update for every eye (N x C). Blind eyes get zeros.
Tensor mvaa_forward(const Tensor& queries, const FeaturePyramid& pyramid,
                    const EyeProjections& projections, const MvaaParams& params,
                    MvaaCache* cache);

struct MvaaInputGrads {
  Tensor queries;
  FeaturePyramid pyramid;
};

// Accumulates parameter gradients (offset_bias excluded) and returns input grads.
MvaaInputGrads mvaa_backward(const Tensor& grad_out, const Tensor& queries,
                             const FeaturePyramid& pyramid, const EyeProjections& projections,
                             MvaaParams& params, const MvaaCache& cache);

// Convenience entry: projects the eyes through the rig, then runs mvaa_forward.
Tensor mvaa(const EyeState& state, const FeaturePyramid& pyramid, const geometry::CameraRig& rig,
            const MvaaParams& params);

}  // namespace ego3rt::attention
