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

#include <functional>
#include <string>
#include <vector>

#include "ego3rt/numerics/rng.hpp"
#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt {

// A learnable tensor and its accumulated gradient. Non-trainable parameters
// never receive gradient and are skipped by the optimizer.
struct Param {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Param() = default;
  explicit Param(Shape shape, bool trainable_ = true)
      : value(shape), grad(shape), trainable(trainable_) {}

  void zero_grad() { grad.fill(Real(0)); }
};

using ParamVisitor = std::function<void(const std::string& name, Param& param)>;

// Row-wise affine map over the last axis: any leading shape, last extent = in.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool with_bias = true);

  // Uniform in +-gain/sqrt(in); bias zero.
  void init(Rng& rng, double gain = 1.0);

  Tensor forward(const Tensor& x) const;
  // Accumulates parameter gradients and returns dL/dx.
  Tensor backward(const Tensor& x, const Tensor& grad_out);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Param weight;  // out x in
  Param bias;    // out (empty shape when disabled)

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  bool has_bias_ = true;
};

// Normalization over the last axis.
class LayerNorm {
 public:
  struct Cache {
    Tensor normalized;
    std::vector<Real> inv_std;
  };

  LayerNorm() = default;
  explicit LayerNorm(std::size_t features, Real eps = Real(1e-5));

  Tensor forward(const Tensor& x, Cache* cache) const;
  Tensor backward(const Cache& cache, const Tensor& grad_out);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  Param gamma;
  Param beta;

 private:
  std::size_t features_ = 0;
  Real eps_ = Real(1e-5);
};

Real gelu(Real x);
Real gelu_derivative(Real x);
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& grad_out);

Real sigmoid(Real x);

enum class PadMode { kZero, kReplicate };

// Dense 2D convolution on H x W x C maps, zero or border-replicate padding.
// weight layout: [k][k][in][out].
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
         std::size_t padding, PadMode pad_mode = PadMode::kZero);

  void init(Rng& rng, double gain = 1.0);

  std::size_t output_extent(std::size_t input_extent) const;
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return padding_; }
  PadMode pad_mode() const { return pad_mode_; }

  Param weight;
  Param bias;

 private:
  std::ptrdiff_t resolve(std::ptrdiff_t i, std::size_t extent) const;

  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::size_t kernel_ = 1;
  std::size_t stride_ = 1;
  std::size_t padding_ = 0;
  PadMode pad_mode_ = PadMode::kZero;
};

// Per-channel k x k convolution, stride 1, "same" output size. Rows are
// zero-padded; columns are zero-padded or periodic.
// weight layout: [k][k][C].
class DepthwiseConv2d {
 public:
  DepthwiseConv2d() = default;
  DepthwiseConv2d(std::size_t channels, std::size_t kernel, bool wrap_columns);

  void init(Rng& rng, double gain = 1.0);
  // Center tap 1, all others 0: the convolution is the identity.
  void set_identity();

  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& x, const Tensor& grad_out);

  void visit(const std::string& prefix, const ParamVisitor& fn);

  Param weight;
  Param bias;

 private:
  std::size_t channels_ = 0;
  std::size_t kernel_ = 3;
  bool wrap_columns_ = false;
};

// Integer-ratio bilinear upsampling of H x W x C maps. Output pixel p samples
// input coordinate (p + 0.5) / ratio - 0.5, clamped to the border.
Tensor upsample_bilinear(const Tensor& x, std::size_t ratio);
Tensor upsample_bilinear_backward(const Tensor& grad_out, std::size_t in_height,
                                  std::size_t in_width, std::size_t ratio);

}  // namespace ego3rt
