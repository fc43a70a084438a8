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
#include <cstdint>
#include <span>
#include <vector>

#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt {

// ---------------------------------------------------------------------------
// Linear maps
// ---------------------------------------------------------------------------

// output[i] = sum_j weights[i][j] * input[j] + bias[i]. weights is out x in.
std::vector<Real> linear(const Tensor& weights, std::span<const Real> bias,
                         std::span<const Real> input);

struct LinearGrads {
  Tensor weights;
  std::vector<Real> bias;
  std::vector<Real> input;
};

LinearGrads linear_backward(const Tensor& weights, std::span<const Real> input,
                            std::span<const Real> grad_output);

// Row-batched affine map: y (n x out) = x (n x in) * w^T + b. bias may be empty.
void affine_rows(const Real* x, std::size_t rows, std::size_t in, const Real* w,
                 const Real* bias, std::size_t out, Real* y);

// Accumulates dw (+= dy^T x), db (+= column sums of dy) and dx (+= dy w).
// Any of dw, db, dx may be null.
void affine_rows_backward(const Real* x, std::size_t rows, std::size_t in, const Real* w,
                          std::size_t out, const Real* dy, Real* dw, Real* db, Real* dx);

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

using IndexGroups = std::vector<std::vector<std::size_t>>;

// Softmax normalized independently inside each group. Entries that belong to
// no group come out as exactly zero. Throws DomainError on an empty group.
std::vector<Real> grouped_softmax(std::span<const Real> logits, const IndexGroups& groups);

std::vector<Real> grouped_softmax_backward(std::span<const Real> probs,
                                           std::span<const Real> grad_output,
                                           const IndexGroups& groups);

// Softmax over the entries with keep[i] != 0 (all entries when keep is empty).
// Dropped entries are written as 0. Returns false when nothing is kept, in
// which case out is all zeros.
bool softmax_masked(std::span<const Real> logits, std::span<const std::uint8_t> keep,
                    std::span<Real> out);

// grad_logits[i] = p_i * (g_i - sum_j p_j g_j). Zero-probability entries get 0.
void softmax_backward(std::span<const Real> probs, std::span<const Real> grad_output,
                      std::span<Real> grad_logits);

// ---------------------------------------------------------------------------
// Bilinear sampling
// ---------------------------------------------------------------------------

enum class AxisMode { kClamp, kWrap };

// Four-corner stencil at a continuous index-space location (x along width,
// y along height, integer values at cell centers). Clamped axes replicate the
// border and have zero derivative outside [0, extent-1]; wrapped axes are
// periodic with period equal to the extent.
struct BilinearTaps {
  std::array<std::size_t, 4> cell{};  // flattened y * width + x
  std::array<Real, 4> weight{};
  std::array<Real, 4> d_weight_dx{};
  std::array<Real, 4> d_weight_dy{};
};

BilinearTaps bilinear_taps(Real x, Real y, std::size_t height, std::size_t width,
                           AxisMode x_mode = AxisMode::kClamp,
                           AxisMode y_mode = AxisMode::kClamp);

// out[c] = sum_k w_k map[cell_k][channel_begin + c] for c < out.size().
void gather_taps(const MapView& map, const BilinearTaps& taps, std::size_t channel_begin,
                 std::span<Real> out);

// grad_map[cell_k][channel_begin + c] += w_k grad[c].
void scatter_taps(const BilinearTaps& taps, std::span<const Real> grad, std::size_t channels,
                  std::size_t channel_begin, Real* grad_map);

// d(<grad, sample>)/d(x, y) in index units.
std::array<Real, 2> taps_location_grad(const MapView& map, const BilinearTaps& taps,
                                       std::size_t channel_begin, std::span<const Real> grad);

// Samples an H x W x C map at normalized (u, v) in [0, 1]^2 where (0, 0) is the
// center of the top-left cell and (1, 1) the center of the bottom-right cell.
// Out-of-range locations clamp to the border.
std::vector<Real> bilinear_sample(const Tensor& map, Real u, Real v);

struct BilinearGrads {
  Tensor map;
  Real u = 0;
  Real v = 0;
};

BilinearGrads bilinear_sample_backward(const Tensor& map, Real u, Real v,
                                       std::span<const Real> grad_output);

}  // namespace ego3rt
