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

#include "ego3rt/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ego3rt/errors.hpp"

namespace ego3rt {

std::vector<Real> linear(const Tensor& weights, std::span<const Real> bias,
                         std::span<const Real> input) {
  if (weights.rank() != 2) throw DimensionError("linear: weights must be a matrix");
  const std::size_t out = weights.extent(0);
  const std::size_t in = weights.extent(1);
  if (input.size() != in) {
    throw DimensionError("linear: input length " + std::to_string(input.size()) +
                         " does not match weight columns " + std::to_string(in));
  }
  if (bias.size() != out) {
    throw DimensionError("linear: bias length " + std::to_string(bias.size()) +
                         " does not match weight rows " + std::to_string(out));
  }
  std::vector<Real> y(out);
  affine_rows(input.data(), 1, in, weights.data(), bias.data(), out, y.data());
  return y;
}

LinearGrads linear_backward(const Tensor& weights, std::span<const Real> input,
                            std::span<const Real> grad_output) {
  const std::size_t out = weights.extent(0);
  const std::size_t in = weights.extent(1);
  if (input.size() != in || grad_output.size() != out) {
    throw DimensionError("linear_backward: shape mismatch");
  }
  LinearGrads g{Tensor(weights.shape()), std::vector<Real>(out, 0), std::vector<Real>(in, 0)};
  affine_rows_backward(input.data(), 1, in, weights.data(), out, grad_output.data(),
                       g.weights.data(), g.bias.data(), g.input.data());
  return g;
}

void affine_rows(const Real* x, std::size_t rows, std::size_t in, const Real* w,
                 const Real* bias, std::size_t out, Real* y) {
  for (std::size_t n = 0; n < rows; ++n) {
    const Real* xr = x + n * in;
    Real* yr = y + n * out;
    for (std::size_t o = 0; o < out; ++o) {
      const Real* wr = w + o * in;
      Real acc = bias ? bias[o] : Real(0);
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
}

void affine_rows_backward(const Real* x, std::size_t rows, std::size_t in, const Real* w,
                          std::size_t out, const Real* dy, Real* dw, Real* db, Real* dx) {
  for (std::size_t n = 0; n < rows; ++n) {
    const Real* xr = x + n * in;
    const Real* dyr = dy + n * out;
    Real* dxr = dx ? dx + n * in : nullptr;
    for (std::size_t o = 0; o < out; ++o) {
      const Real g = dyr[o];
      if (g == Real(0)) continue;
      if (db) db[o] += g;
      if (dw) {
        Real* dwr = dw + o * in;
        for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
      }
      if (dxr) {
        const Real* wr = w + o * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
    }
  }
}

std::vector<Real> grouped_softmax(std::span<const Real> logits, const IndexGroups& groups) {
  std::vector<Real> out(logits.size(), Real(0));
  for (const auto& group : groups) {
    if (group.empty()) throw DomainError("grouped_softmax: empty group");
    Real peak = -std::numeric_limits<Real>::infinity();
    for (auto i : group) {
      if (i >= logits.size()) throw DimensionError("grouped_softmax: index out of range");
      peak = std::max(peak, logits[i]);
    }
    Real total = 0;
    for (auto i : group) {
      out[i] = std::exp(logits[i] - peak);
      total += out[i];
    }
    for (auto i : group) out[i] /= total;
  }
  return out;
}

std::vector<Real> grouped_softmax_backward(std::span<const Real> probs,
                                           std::span<const Real> grad_output,
                                           const IndexGroups& groups) {
  if (probs.size() != grad_output.size()) {
    throw DimensionError("grouped_softmax_backward: length mismatch");
  }
  std::vector<Real> grad(probs.size(), Real(0));
  for (const auto& group : groups) {
    Real dot = 0;
    for (auto i : group) dot += probs[i] * grad_output[i];
    for (auto i : group) grad[i] = probs[i] * (grad_output[i] - dot);
  }
  return grad;
}

bool softmax_masked(std::span<const Real> logits, std::span<const std::uint8_t> keep,
                    std::span<Real> out) {
  const bool all = keep.empty();
  Real peak = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (all || keep[i]) peak = std::max(peak, logits[i]);
  }
  if (peak == -std::numeric_limits<Real>::infinity()) {
    std::fill(out.begin(), out.end(), Real(0));
    return false;
  }
  Real total = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = (all || keep[i]) ? std::exp(logits[i] - peak) : Real(0);
    total += out[i];
  }
  for (auto& p : out) p /= total;
  return true;
}

void softmax_backward(std::span<const Real> probs, std::span<const Real> grad_output,
                      std::span<Real> grad_logits) {
  Real dot = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * grad_output[i];
  for (std::size_t i = 0; i < probs.size(); ++i) {
    grad_logits[i] = probs[i] * (grad_output[i] - dot);
  }
}

namespace {

struct AxisStencil {
  std::size_t lo = 0;
  std::size_t hi = 0;
  Real frac = 0;
  Real slope = 0;  // d(frac)/d(coordinate): 1 inside, 0 where clamped
};

AxisStencil axis_stencil(Real x, std::size_t extent, AxisMode mode) {
  AxisStencil s;
  if (extent <= 1) return s;
  if (mode == AxisMode::kWrap) {
    const Real n = static_cast<Real>(extent);
    Real w = x - n * std::floor(x / n);
    auto lo = static_cast<std::size_t>(std::floor(w));
    if (lo >= extent) {
      lo = 0;
      w = 0;
    }
    s.lo = lo;
    s.hi = (lo + 1) % extent;
    s.frac = w - static_cast<Real>(lo);
    s.slope = 1;
    return s;
  }
  const Real top = static_cast<Real>(extent - 1);
  Real c = x;
  s.slope = 1;
  if (!(c >= 0)) {
    c = 0;
    s.slope = 0;
  } else if (c > top) {
    c = top;
    s.slope = 0;
  }
  auto lo = static_cast<std::size_t>(std::floor(c));
  lo = std::min(lo, extent - 2);
  s.lo = lo;
  s.hi = lo + 1;
  s.frac = c - static_cast<Real>(lo);
  return s;
}

}  // namespace

BilinearTaps bilinear_taps(Real x, Real y, std::size_t height, std::size_t width,
                           AxisMode x_mode, AxisMode y_mode) {
  const AxisStencil sx = axis_stencil(x, width, x_mode);
  const AxisStencil sy = axis_stencil(y, height, y_mode);
  BilinearTaps t;
  t.cell = {sy.lo * width + sx.lo, sy.lo * width + sx.hi, sy.hi * width + sx.lo,
            sy.hi * width + sx.hi};
  const Real fx = sx.frac;
  const Real fy = sy.frac;
  t.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  t.d_weight_dx = {-(1 - fy) * sx.slope, (1 - fy) * sx.slope, -fy * sx.slope, fy * sx.slope};
  t.d_weight_dy = {-(1 - fx) * sy.slope, -fx * sy.slope, (1 - fx) * sy.slope, fx * sy.slope};
  return t;
}

void gather_taps(const MapView& map, const BilinearTaps& taps, std::size_t channel_begin,
                 std::span<Real> out) {
  std::fill(out.begin(), out.end(), Real(0));
  for (int k = 0; k < 4; ++k) {
    const Real w = taps.weight[k];
    if (w == Real(0)) continue;
    const Real* src = map.data + taps.cell[k] * map.channels + channel_begin;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += w * src[c];
  }
}

void scatter_taps(const BilinearTaps& taps, std::span<const Real> grad, std::size_t channels,
                  std::size_t channel_begin, Real* grad_map) {
  for (int k = 0; k < 4; ++k) {
    const Real w = taps.weight[k];
    if (w == Real(0)) continue;
    Real* dst = grad_map + taps.cell[k] * channels + channel_begin;
    for (std::size_t c = 0; c < grad.size(); ++c) dst[c] += w * grad[c];
  }
}

std::array<Real, 2> taps_location_grad(const MapView& map, const BilinearTaps& taps,
                                       std::size_t channel_begin, std::span<const Real> grad) {
  std::array<Real, 2> g{0, 0};
  for (int k = 0; k < 4; ++k) {
    if (taps.d_weight_dx[k] == Real(0) && taps.d_weight_dy[k] == Real(0)) continue;
    const Real* src = map.data + taps.cell[k] * map.channels + channel_begin;
    Real dot = 0;
    for (std::size_t c = 0; c < grad.size(); ++c) dot += src[c] * grad[c];
    g[0] += taps.d_weight_dx[k] * dot;
    g[1] += taps.d_weight_dy[k] * dot;
  }
  return g;
}

namespace {

Real index_scale(std::size_t extent) {
  return extent > 1 ? static_cast<Real>(extent - 1) : Real(0);
}

}  // namespace

std::vector<Real> bilinear_sample(const Tensor& map, Real u, Real v) {
  const MapView view = MapView::of(map);
  const auto taps = bilinear_taps(u * index_scale(view.width), v * index_scale(view.height),
                                  view.height, view.width);
  std::vector<Real> out(view.channels);
  gather_taps(view, taps, 0, out);
  return out;
}

BilinearGrads bilinear_sample_backward(const Tensor& map, Real u, Real v,
                                       std::span<const Real> grad_output) {
  const MapView view = MapView::of(map);
  if (grad_output.size() != view.channels) {
    throw DimensionError("bilinear_sample_backward: gradient length mismatch");
  }
  const Real sx = index_scale(view.width);
  const Real sy = index_scale(view.height);
  const auto taps = bilinear_taps(u * sx, v * sy, view.height, view.width);
  BilinearGrads g{Tensor(map.shape()), 0, 0};
  scatter_taps(taps, grad_output, view.channels, 0, g.map.data());
  const auto loc = taps_location_grad(view, taps, 0, grad_output);
  g.u = loc[0] * sx;
  g.v = loc[1] * sy;
  return g;
}

}  // namespace ego3rt
