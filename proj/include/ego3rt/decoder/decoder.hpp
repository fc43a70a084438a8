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

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "ego3rt/attention/mvaa.hpp"
#include "ego3rt/attention/self_attention.hpp"
#include "ego3rt/eyes/eye_grid.hpp"
#include "ego3rt/geometry/camera.hpp"
#include "ego3rt/numerics/layers.hpp"

namespace ego3rt::decoder {

using attention::EyeLayout;
using attention::EyeProjections;
using attention::FeaturePyramid;

// Rig plus one H x W x 3 image in [0, 1] per camera, in rig order.
struct SceneInput {
  geometry::CameraRig rig;
  std::vector<Tensor> images;

  void validate() const;
};

struct DecoderConfig {
  std::size_t layers = 2;             // L
  std::size_t channels = 32;          // C
  std::size_t pyramid_channels = 16;  // C_p
  std::size_t heads = 2;              // N_h
  std::size_t points = 4;             // N_point
  std::size_t scales = 2;             // N_scale
  std::size_t views = 4;              // N_view
  std::size_t ffn_hidden = 64;
  bool positional_encoding = false;
  attention::OffsetUnits offset_units = attention::OffsetUnits::kFeaturePixels;

  attention::MvaaShape mvaa_shape() const;
  void validate() const;
};

// Strided 3x3 convolutions: scale 0 = conv(image), scale l+1 = conv(GELU(scale l)).
// Each halves the resolution. Border-replicate padding keeps constant images
// constant.
class ToyPyramid {
 public:
  struct Cache {
    // Per view: the input of every conv (image, then GELU outputs) and the
    // pre-activation maps that fed the GELUs.
    std::vector<std::vector<Tensor>> inputs;
    FeaturePyramid maps;
  };

  ToyPyramid() = default;
  ToyPyramid(std::size_t in_channels, std::size_t channels, std::size_t scales);

  void init(Rng& rng);

  // Throws ConfigError when image extents are not divisible by 2^scales.
  FeaturePyramid forward(const std::vector<Tensor>& images, Cache* cache) const;
  // Accumulates parameter gradients from d(loss)/d(pyramid).
  void backward(const Cache& cache, const FeaturePyramid& grad);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::vector<Conv2d> convs;

 private:
  std::size_t scales_ = 0;
};

// Per-scene inputs shared by every decoder layer.
struct LayerContext {
  EyeLayout layout;
  const FeaturePyramid* pyramid = nullptr;
  const EyeProjections* projections = nullptr;
};

// Pre-norm residual stack: deformable self-attention, polar attention, MVAA,
// FFN. Eye positions are never touched.
class DecoderLayer {
 public:
  struct Cache {
    std::array<Tensor, 4> inputs;  // residual stream entering each block
    std::array<LayerNorm::Cache, 4> norms;
    std::array<Tensor, 4> normalized;
    attention::DeformableSelfAttention::Cache dsa;
    attention::PolarAttention::Cache polar;
    attention::MvaaCache mvaa;
    attention::FfnDwConv::Cache ffn;
  };

  DecoderLayer() = default;
  explicit DecoderLayer(const DecoderConfig& config);

  void init(Rng& rng);
  // Every output projection zero: the layer becomes the identity.
  void zero_outputs();

  Tensor forward(const Tensor& y, const LayerContext& ctx, Cache* cache) const;
  // Returns d(loss)/dy and accumulates into grad_pyramid.
  Tensor backward(const Tensor& grad_out, const LayerContext& ctx, const Cache& cache,
                  FeaturePyramid& grad_pyramid);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::array<LayerNorm, 4> norms;
  attention::DeformableSelfAttention self_attention;
  attention::PolarAttention polar_attention;
  attention::MvaaParams cross_attention;
  attention::FfnDwConv ffn;
};

// Sinusoidal code of the eye (x, y) positions, N x C. Channel blocks of four
// hold sin/cos of x and y at geometric frequencies.
Tensor positional_encoding(const eyes::EyeGrid& grid, std::size_t channels);

// Image pyramid, learnable eye initialization and L decoder layers.
class BackTracingDecoder {
 public:
  struct Cache {
    ToyPyramid::Cache pyramid;
    EyeProjections projections;
    std::vector<DecoderLayer::Cache> layers;
    bool external_pyramid = false;
  };

  BackTracingDecoder() = default;
  BackTracingDecoder(const DecoderConfig& config, const eyes::EyeGrid& grid);

  void init(Rng& rng);

  // Image path: builds the toy pyramid from the scene images.
  Tensor forward(const SceneInput& scene, Cache* cache) const;
  // External-feature path: the pyramid is given (e.g. loaded from EGT1 files).
  Tensor forward(const FeaturePyramid& pyramid, const geometry::CameraRig& rig, Cache* cache) const;

  // Accumulates every parameter gradient from d(loss)/d(eye features).
  void backward(const Tensor& grad_eyes, Cache& cache);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  const DecoderConfig& config() const { return config_; }
  const eyes::EyeGrid& grid() const { return grid_; }
  EyeLayout layout() const { return {grid_.radial_count, grid_.ray_count}; }
  // Initial embeddings: the shared vector broadcast to every eye, plus the
  // positional code when enabled.
  Tensor initial_embeddings() const;

  ToyPyramid pyramid;
  Param eye_init;  // C
  std::vector<DecoderLayer> layers;

 private:
  Tensor run_layers(const FeaturePyramid& pyramid, const geometry::CameraRig& rig,
                    Cache* cache) const;

  DecoderConfig config_;
  eyes::EyeGrid grid_;
  Tensor position_code_;
};

// Convenience: the 3D representation (N_eyes x C) of one scene.
Tensor ego3rt_forward(const SceneInput& scene, const BackTracingDecoder& decoder);

// One EGT1 file per (view, scale) named feat_v{t}_s{l}.egt with 1-based t, l.
FeaturePyramid load_pyramid(const std::filesystem::path& dir, std::size_t views,
                            std::size_t scales);
void save_pyramid(const std::filesystem::path& dir, const FeaturePyramid& pyramid);

}  // namespace ego3rt::decoder
