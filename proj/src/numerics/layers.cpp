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

#include "ego3rt/numerics/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/ops.hpp"

namespace ego3rt {

namespace {

std::size_t leading_rows(const Tensor& x, std::size_t features, const char* what) {
  if (x.rank() == 0 || x.shape().back() != features) {
    throw DimensionError(std::string(what) + ": last axis of " + shape_string(x.shape()) +
                         " must be " + std::to_string(features));
  }
  return x.size() / features;
}

Shape with_last(Shape s, std::size_t last) {
  s.back() = last;
  return s;
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, bool with_bias)
    : weight(Shape{out, in}),
      bias(with_bias ? Shape{out} : Shape{0}),
      in_(in),
      out_(out),
      has_bias_(with_bias) {}

void Linear::init(Rng& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(std::max<std::size_t>(in_, 1)));
  rng.fill_uniform(weight.value, -bound, bound);
  bias.value.fill(0);
}

Tensor Linear::forward(const Tensor& x) const {
  const std::size_t rows = leading_rows(x, in_, "Linear");
  Tensor y(with_last(x.shape(), out_));
  affine_rows(x.data(), rows, in_, weight.value.data(), has_bias_ ? bias.value.data() : nullptr,
              out_, y.data());
  return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& grad_out) {
  const std::size_t rows = leading_rows(x, in_, "Linear::backward");
  Tensor dx(x.shape());
  affine_rows_backward(x.data(), rows, in_, weight.value.data(), out_, grad_out.data(),
                       weight.trainable ? weight.grad.data() : nullptr,
                       has_bias_ && bias.trainable ? bias.grad.data() : nullptr, dx.data());
  return dx;
}

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  if (has_bias_) fn(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(std::size_t features, Real eps)
    : gamma(Shape{features}), beta(Shape{features}), features_(features), eps_(eps) {
  gamma.value.fill(1);
}

Tensor LayerNorm::forward(const Tensor& x, Cache* cache) const {
  const std::size_t rows = leading_rows(x, features_, "LayerNorm");
  Tensor y(x.shape());
  Tensor normalized(x.shape());
  std::vector<Real> inv_std(rows);
  const Real n = static_cast<Real>(features_);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = x.data() + r * features_;
    Real mean = 0;
    for (std::size_t i = 0; i < features_; ++i) mean += xr[i];
    mean /= n;
    Real var = 0;
    for (std::size_t i = 0; i < features_; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= n;
    const Real is = Real(1) / std::sqrt(var + eps_);
    inv_std[r] = is;
    Real* nr = normalized.data() + r * features_;
    Real* yr = y.data() + r * features_;
    for (std::size_t i = 0; i < features_; ++i) {
      nr[i] = (xr[i] - mean) * is;
      yr[i] = nr[i] * gamma.value[i] + beta.value[i];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor LayerNorm::backward(const Cache& cache, const Tensor& grad_out) {
  const std::size_t rows = cache.inv_std.size();
  Tensor dx(grad_out.shape());
  const Real n = static_cast<Real>(features_);
  std::vector<Real> dxhat(features_);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* g = grad_out.data() + r * features_;
    const Real* xh = cache.normalized.data() + r * features_;
    Real mean_d = 0;
    Real mean_dx = 0;
    for (std::size_t i = 0; i < features_; ++i) {
      if (gamma.trainable) gamma.grad[i] += g[i] * xh[i];
      if (beta.trainable) beta.grad[i] += g[i];
      dxhat[i] = g[i] * gamma.value[i];
      mean_d += dxhat[i];
      mean_dx += dxhat[i] * xh[i];
    }
    mean_d /= n;
    mean_dx /= n;
    Real* d = dx.data() + r * features_;
    for (std::size_t i = 0; i < features_; ++i) {
      d[i] = cache.inv_std[r] * (dxhat[i] - mean_d - xh[i] * mean_dx);
    }
  }
  return dx;
}

void LayerNorm::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

namespace {
constexpr Real kInvSqrt2 = Real(1) / std::numbers::sqrt2_v<Real>;
}  // namespace

Real gelu(Real x) { return Real(0.5) * x * (Real(1) + std::erf(x * kInvSqrt2)); }

Real gelu_derivative(Real x) {
  const Real cdf = Real(0.5) * (Real(1) + std::erf(x * kInvSqrt2));
  const Real pdf = std::exp(Real(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Real> *
                   kInvSqrt2;
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
  return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& grad_out) {
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = grad_out[i] * gelu_derivative(x[i]);
  return dx;
}

Real sigmoid(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
               std::size_t padding, PadMode pad_mode)
    : weight(Shape{kernel, kernel, in, out}),
      bias(Shape{out}),
      in_(in),
      out_(out),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      pad_mode_(pad_mode) {
  if (kernel == 0 || stride == 0) throw ConfigError("Conv2d: kernel and stride must be positive");
}

void Conv2d::init(Rng& rng, double gain) {
  const double fan_in = static_cast<double>(kernel_ * kernel_ * in_);
  const double bound = gain / std::sqrt(std::max(fan_in, 1.0));
  rng.fill_uniform(weight.value, -bound, bound);
  bias.value.fill(0);
}

std::size_t Conv2d::output_extent(std::size_t input_extent) const {
  const std::size_t padded = input_extent + 2 * padding_;
  if (padded < kernel_) throw ConfigError("Conv2d: input smaller than kernel");
  return (padded - kernel_) / stride_ + 1;
}

// Input index for a possibly padded position; -1 means a zero pad.
std::ptrdiff_t Conv2d::resolve(std::ptrdiff_t i, std::size_t extent) const {
  const auto n = static_cast<std::ptrdiff_t>(extent);
  if (i >= 0 && i < n) return i;
  if (pad_mode_ == PadMode::kZero) return -1;
  return i < 0 ? 0 : n - 1;
}

Tensor Conv2d::forward(const Tensor& x) const {
  const MapView in = MapView::of(x);
  if (in.channels != in_) throw DimensionError("Conv2d: input channels mismatch");
  const std::size_t oh = output_extent(in.height);
  const std::size_t ow = output_extent(in.width);
  Tensor y(Shape{oh, ow, out_});
  const Real* w = weight.value.data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      Real* yp = y.data() + (oy * ow + ox) * out_;
      for (std::size_t o = 0; o < out_; ++o) yp[o] = bias.value[o];
      for (std::size_t ky = 0; ky < kernel_; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) -
                        static_cast<std::ptrdiff_t>(padding_);
        const auto ry = resolve(iy, in.height);
        if (ry < 0) continue;
        for (std::size_t kx = 0; kx < kernel_; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                          static_cast<std::ptrdiff_t>(padding_);
          const auto rx = resolve(ix, in.width);
          if (rx < 0) continue;
          const Real* xp = in.cell(static_cast<std::size_t>(ry), static_cast<std::size_t>(rx));
          const Real* wk = w + (ky * kernel_ + kx) * in_ * out_;
          for (std::size_t i = 0; i < in_; ++i) {
            const Real xv = xp[i];
            const Real* wr = wk + i * out_;
            for (std::size_t o = 0; o < out_; ++o) yp[o] += xv * wr[o];
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& grad_out) {
  const MapView in = MapView::of(x);
  const std::size_t oh = grad_out.extent(0);
  const std::size_t ow = grad_out.extent(1);
  Tensor dx(x.shape());
  const Real* w = weight.value.data();
  Real* dw = weight.trainable ? weight.grad.data() : nullptr;
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const Real* gp = grad_out.data() + (oy * ow + ox) * out_;
      if (bias.trainable) {
        for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += gp[o];
      }
      for (std::size_t ky = 0; ky < kernel_; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) -
                        static_cast<std::ptrdiff_t>(padding_);
        const auto ry = resolve(iy, in.height);
        if (ry < 0) continue;
        for (std::size_t kx = 0; kx < kernel_; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                          static_cast<std::ptrdiff_t>(padding_);
          const auto rx = resolve(ix, in.width);
          if (rx < 0) continue;
          const std::size_t cell = static_cast<std::size_t>(ry) * in.width + static_cast<std::size_t>(rx);
          const Real* xp = x.data() + cell * in_;
          Real* dxp = dx.data() + cell * in_;
          const std::size_t tap = (ky * kernel_ + kx) * in_ * out_;
          for (std::size_t i = 0; i < in_; ++i) {
            const Real* wr = w + tap + i * out_;
            Real acc = 0;
            for (std::size_t o = 0; o < out_; ++o) acc += wr[o] * gp[o];
            dxp[i] += acc;
            if (dw) {
              Real* dwr = dw + tap + i * out_;
              const Real xv = xp[i];
              for (std::size_t o = 0; o < out_; ++o) dwr[o] += xv * gp[o];
            }
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

DepthwiseConv2d::DepthwiseConv2d(std::size_t channels, std::size_t kernel, bool wrap_columns)
    : weight(Shape{kernel, kernel, channels}),
      bias(Shape{channels}),
      channels_(channels),
      kernel_(kernel),
      wrap_columns_(wrap_columns) {
  if (kernel % 2 == 0) throw ConfigError("DepthwiseConv2d: kernel must be odd");
}

void DepthwiseConv2d::init(Rng& rng, double gain) {
  const double bound = gain / static_cast<double>(kernel_);
  rng.fill_uniform(weight.value, -bound, bound);
  bias.value.fill(0);
}

void DepthwiseConv2d::set_identity() {
  weight.value.fill(0);
  const std::size_t center = (kernel_ / 2) * kernel_ + kernel_ / 2;
  for (std::size_t c = 0; c < channels_; ++c) weight.value[center * channels_ + c] = 1;
  bias.value.fill(0);
}

Tensor DepthwiseConv2d::forward(const Tensor& x) const {
  const MapView in = MapView::of(x);
  if (in.channels != channels_) throw DimensionError("DepthwiseConv2d: channel mismatch");
  Tensor y(x.shape());
  const auto r = static_cast<std::ptrdiff_t>(kernel_ / 2);
  const auto H = static_cast<std::ptrdiff_t>(in.height);
  const auto W = static_cast<std::ptrdiff_t>(in.width);
  for (std::ptrdiff_t yy = 0; yy < H; ++yy) {
    for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
      Real* yp = y.data() + (yy * W + xx) * channels_;
      for (std::size_t c = 0; c < channels_; ++c) yp[c] = bias.value[c];
      for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(kernel_); ++ky) {
        const std::ptrdiff_t iy = yy + ky - r;
        if (iy < 0 || iy >= H) continue;
        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(kernel_); ++kx) {
          std::ptrdiff_t ix = xx + kx - r;
          if (wrap_columns_) {
            ix = ((ix % W) + W) % W;
          } else if (ix < 0 || ix >= W) {
            continue;
          }
          const Real* xp = x.data() + (iy * W + ix) * channels_;
          const Real* wk = weight.value.data() + (ky * kernel_ + kx) * channels_;
          for (std::size_t c = 0; c < channels_; ++c) yp[c] += wk[c] * xp[c];
        }
      }
    }
  }
  return y;
}

Tensor DepthwiseConv2d::backward(const Tensor& x, const Tensor& grad_out) {
  const MapView in = MapView::of(x);
  Tensor dx(x.shape());
  const auto r = static_cast<std::ptrdiff_t>(kernel_ / 2);
  const auto H = static_cast<std::ptrdiff_t>(in.height);
  const auto W = static_cast<std::ptrdiff_t>(in.width);
  for (std::ptrdiff_t yy = 0; yy < H; ++yy) {
    for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
      const Real* gp = grad_out.data() + (yy * W + xx) * channels_;
      if (bias.trainable) {
        for (std::size_t c = 0; c < channels_; ++c) bias.grad[c] += gp[c];
      }
      for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(kernel_); ++ky) {
        const std::ptrdiff_t iy = yy + ky - r;
        if (iy < 0 || iy >= H) continue;
        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(kernel_); ++kx) {
          std::ptrdiff_t ix = xx + kx - r;
          if (wrap_columns_) {
            ix = ((ix % W) + W) % W;
          } else if (ix < 0 || ix >= W) {
            continue;
          }
          const std::size_t cell = static_cast<std::size_t>(iy * W + ix);
          const Real* xp = x.data() + cell * channels_;
          Real* dxp = dx.data() + cell * channels_;
          const std::size_t tap = static_cast<std::size_t>(ky * static_cast<std::ptrdiff_t>(kernel_) + kx) * channels_;
          const Real* wk = weight.value.data() + tap;
          for (std::size_t c = 0; c < channels_; ++c) {
            dxp[c] += wk[c] * gp[c];
            if (weight.trainable) weight.grad[tap + c] += xp[c] * gp[c];
          }
        }
      }
    }
  }
  return dx;
}

void DepthwiseConv2d::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

namespace {

struct Stencil1d {
  std::size_t lo;
  std::size_t hi;
  Real frac;
};

std::vector<Stencil1d> upsample_stencils(std::size_t n, std::size_t ratio) {
  std::vector<Stencil1d> out(n * ratio);
  const Real top = static_cast<Real>(n - 1);
  for (std::size_t p = 0; p < out.size(); ++p) {
    Real s = (static_cast<Real>(p) + Real(0.5)) / static_cast<Real>(ratio) - Real(0.5);
    s = std::clamp(s, Real(0), top);
    auto lo = static_cast<std::size_t>(std::floor(s));
    lo = std::min(lo, n - 1);
    const std::size_t hi = std::min(lo + 1, n - 1);
    out[p] = {lo, hi, s - static_cast<Real>(lo)};
  }
  return out;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t ratio) {
  const MapView in = MapView::of(x);
  if (ratio == 0) throw ConfigError("upsample ratio must be positive");
  const auto sy = upsample_stencils(in.height, ratio);
  const auto sx = upsample_stencils(in.width, ratio);
  Tensor y(Shape{sy.size(), sx.size(), in.channels});
  for (std::size_t oy = 0; oy < sy.size(); ++oy) {
    for (std::size_t ox = 0; ox < sx.size(); ++ox) {
      const Real fy = sy[oy].frac;
      const Real fx = sx[ox].frac;
      const Real* a = in.cell(sy[oy].lo, sx[ox].lo);
      const Real* b = in.cell(sy[oy].lo, sx[ox].hi);
      const Real* c = in.cell(sy[oy].hi, sx[ox].lo);
      const Real* d = in.cell(sy[oy].hi, sx[ox].hi);
      Real* yp = y.data() + (oy * sx.size() + ox) * in.channels;
      for (std::size_t k = 0; k < in.channels; ++k) {
        yp[k] = (1 - fy) * ((1 - fx) * a[k] + fx * b[k]) + fy * ((1 - fx) * c[k] + fx * d[k]);
      }
    }
  }
  return y;
}

Tensor upsample_bilinear_backward(const Tensor& grad_out, std::size_t in_height,
                                  std::size_t in_width, std::size_t ratio) {
  const std::size_t channels = grad_out.extent(2);
  const auto sy = upsample_stencils(in_height, ratio);
  const auto sx = upsample_stencils(in_width, ratio);
  Tensor dx(Shape{in_height, in_width, channels});
  for (std::size_t oy = 0; oy < sy.size(); ++oy) {
    for (std::size_t ox = 0; ox < sx.size(); ++ox) {
      const Real fy = sy[oy].frac;
      const Real fx = sx[ox].frac;
      const Real* g = grad_out.data() + (oy * sx.size() + ox) * channels;
      const std::array<std::pair<std::size_t, Real>, 4> taps{{
          {sy[oy].lo * in_width + sx[ox].lo, (1 - fy) * (1 - fx)},
          {sy[oy].lo * in_width + sx[ox].hi, (1 - fy) * fx},
          {sy[oy].hi * in_width + sx[ox].lo, fy * (1 - fx)},
          {sy[oy].hi * in_width + sx[ox].hi, fy * fx},
      }};
      for (const auto& [cell, w] : taps) {
        Real* d = dx.data() + cell * channels;
        for (std::size_t k = 0; k < channels; ++k) d[k] += w * g[k];
      }
    }
  }
  return dx;
}

}  // namespace ego3rt
