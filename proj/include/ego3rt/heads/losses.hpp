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

#include <vector>

#include "ego3rt/heads/boxes.hpp"
#include "ego3rt/heads/heads.hpp"

namespace ego3rt::heads {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] inside the logs.
inline constexpr Real kProbClamp = Real(1e-6);

struct LossConfig {
  Real alpha = 2;
  Real beta = 4;
  Real lambda_cls = 1;
  Real lambda_box = 1;
  std::vector<Real> lambda_seg;  // per map element; empty means all 1
  TaskGroups groups;

  Real seg_weight(std::size_t element) const;
  void validate() const;
};

// -(1/N) sum_i [ y_i == 1 : (1 - p)^alpha log p
//               otherwise : (1 - y)^beta p^alpha log(1 - p) ]
// N is floored at 1. When grad is non-null it receives dL/dp.
Real focal_loss(const Tensor& probs, const Tensor& targets, Real alpha, Real beta, Real n,
                Tensor* grad = nullptr);
// Same loss on logits (p = sigmoid(z)); grad receives dL/dz.
Real focal_loss_logits(const Tensor& logits, const Tensor& targets, Real alpha, Real beta, Real n,
                       Tensor* grad = nullptr);

// Number of exact-1 entries in a heatmap target, floored at 1.
Real positive_count(const Tensor& targets);

// Sum over the ten regression channels of |pred - target| at each object's
// cell, averaged over objects; 0 without objects. grad (same shape as the
// regression map) is accumulated, not overwritten.
Real box_l1_loss(const Tensor& regression, const std::vector<ObjectTarget>& objects,
                 Tensor* grad = nullptr);

// Binary cross-entropy with logits for one map element (channel `element` of
// an S x S x E raster), averaged over cells with valid != 0.
Real masked_bce(const Tensor& logits, const Tensor& targets, const std::vector<std::uint8_t>& valid,
                std::size_t element, Tensor* grad = nullptr);

struct SegTargets {
  Tensor rasters;                    // S x S x E in {0, 1}
  std::vector<std::uint8_t> valid;   // S * S
};

struct LossBreakdown {
  Real total = 0;
  Real detection = 0;
  Real segmentation = 0;
  std::vector<Real> cls;  // per group, unweighted
  std::vector<Real> box;  // per group, unweighted
  std::vector<Real> seg;  // per element, unweighted
};

struct LossGrads {
  DetectionOutput detection;
  Tensor segmentation;
};

// L_det = sum_t (lambda_cls L_cls^t + lambda_box L_box^t),
// L_seg = sum_t lambda_seg^t BCE^t, L = L_det + L_seg.
// Either head may be absent (empty outputs); its term is then 0.
LossBreakdown total_loss(const DetectionOutput& det, const Tensor& seg_logits,
                         const DetectionTargets& det_targets, const SegTargets& seg_targets,
                         const LossConfig& cfg, LossGrads* grads = nullptr);

}  // namespace ego3rt::heads
