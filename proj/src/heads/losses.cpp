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

#include "ego3rt/heads/losses.hpp"

#include <cmath>

#include "ego3rt/errors.hpp"

namespace ego3rt::heads {

Real LossConfig::seg_weight(std::size_t element) const {
  return lambda_seg.empty() ? Real(1) : lambda_seg.at(element);
}

void LossConfig::validate() const {
  if (alpha < 0 || beta < 0) throw ConfigError("loss: focal exponents must be nonnegative");
  if (lambda_cls < 0 || lambda_box < 0) throw ConfigError("loss: weights must be nonnegative");
  for (Real w : lambda_seg)
    if (w < 0) throw ConfigError("loss: weights must be nonnegative");
  groups.validate();
}

Real focal_loss(const Tensor& probs, const Tensor& targets, Real alpha, Real beta, Real n,
                Tensor* grad) {
  require_shape(targets, probs.shape(), "focal_loss targets");
  const Real inv_n = Real(1) / std::max(n, Real(1));
  if (grad) *grad = Tensor(probs.shape());
  Real sum = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Real raw = probs[i];
    const Real p = std::clamp(raw, kProbClamp, 1 - kProbClamp);
    const bool inside = raw == p;
    const Real y = targets[i];
    Real loss, dp;
    if (y == 1) {
      const Real q = std::pow(1 - p, alpha);
      loss = -q * std::log(p);
      dp = (alpha == 0 ? Real(0) : alpha * std::pow(1 - p, alpha - 1) * std::log(p)) - q / p;
    } else {
      const Real wneg = std::pow(1 - y, beta);
      const Real pa = std::pow(p, alpha);
      const Real lg = std::log(1 - p);
      loss = -wneg * pa * lg;
      dp = -wneg * ((alpha == 0 ? Real(0) : alpha * std::pow(p, alpha - 1) * lg) - pa / (1 - p));
    }
    sum += loss;
    if (grad) (*grad)[i] = inside ? dp * inv_n : Real(0);
  }
  return sum * inv_n;
}

Real focal_loss_logits(const Tensor& logits, const Tensor& targets, Real alpha, Real beta, Real n,
                       Tensor* grad) {
  const Tensor p = heatmap(logits);
  const Real loss = focal_loss(p, targets, alpha, beta, n, grad);
  if (grad) {
    for (std::size_t i = 0; i < p.size(); ++i) (*grad)[i] *= p[i] * (1 - p[i]);
  }
  return loss;
}

Real positive_count(const Tensor& targets) {
  Real n = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) n += targets[i] == 1 ? 1 : 0;
  return std::max(n, Real(1));
}

Real box_l1_loss(const Tensor& regression, const std::vector<ObjectTarget>& objects, Tensor* grad) {
  if (objects.empty()) return 0;
  const std::size_t W = regression.extent(1), C = regression.extent(2);
  if (C != kRegressionChannels) throw DimensionError("box_l1_loss: expected 10 regression channels");
  const Real inv = Real(1) / static_cast<Real>(objects.size());
  Real sum = 0;
  for (const auto& o : objects) {
    const std::size_t base = (o.row * W + o.col) * C;
    for (std::size_t k = 0; k < C; ++k) {
      const Real d = regression[base + k] - o.regression[k];
      sum += std::abs(d);
      if (grad) (*grad)[base + k] += inv * (d > 0 ? Real(1) : d < 0 ? Real(-1) : Real(0));
    }
  }
  return sum * inv;
}

Real masked_bce(const Tensor& logits, const Tensor& targets, const std::vector<std::uint8_t>& valid,
                std::size_t element, Tensor* grad) {
  require_shape(targets, logits.shape(), "masked_bce targets");
  const std::size_t E = logits.extent(2), cells = logits.extent(0) * logits.extent(1);
  if (valid.size() != cells) throw DimensionError("masked_bce: mask size mismatch");
  std::size_t count = 0;
  for (auto v : valid) count += v ? 1 : 0;
  if (count == 0) return 0;
  const Real inv = Real(1) / static_cast<Real>(count);
  Real sum = 0;
  for (std::size_t i = 0; i < cells; ++i) {
    if (!valid[i]) continue;
    const Real z = logits[i * E + element], y = targets[i * E + element];
    // log(1 + exp(-|z|)) form is stable for large |z|.
    sum += std::max(z, Real(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
    if (grad) (*grad)[i * E + element] += inv * (sigmoid(z) - y);
  }
  return sum * inv;
}

LossBreakdown total_loss(const DetectionOutput& det, const Tensor& seg_logits,
                         const DetectionTargets& det_targets, const SegTargets& seg_targets,
                         const LossConfig& cfg, LossGrads* grads) {
  LossBreakdown out;
  const std::size_t G = det.heat_logits.size();
  if (grads) {
    grads->detection.heat_logits.clear();
    grads->detection.regression.clear();
    for (std::size_t g = 0; g < G; ++g) {
      grads->detection.heat_logits.emplace_back(det.heat_logits[g].shape());
      grads->detection.regression.emplace_back(det.regression[g].shape());
    }
    grads->segmentation = seg_logits.empty() ? Tensor() : Tensor(seg_logits.shape());
  }
  if (G > 0 && (det_targets.heat.size() != G || det_targets.objects.size() != G)) {
    throw DimensionError("total_loss: detection groups and targets disagree");
  }
  for (std::size_t g = 0; g < G; ++g) {
    const Tensor& target = det_targets.heat[g];
    Tensor gcls;
    const Real lc = focal_loss_logits(det.heat_logits[g], target, cfg.alpha, cfg.beta,
                                      positive_count(target), grads ? &gcls : nullptr);
    Tensor gbox(det.regression[g].shape());
    const Real lb = box_l1_loss(det.regression[g], det_targets.objects[g], grads ? &gbox : nullptr);
    out.cls.push_back(lc);
    out.box.push_back(lb);
    out.detection += cfg.lambda_cls * lc + cfg.lambda_box * lb;
    if (grads) {
      for (std::size_t i = 0; i < gcls.size(); ++i) grads->detection.heat_logits[g][i] = cfg.lambda_cls * gcls[i];
      for (std::size_t i = 0; i < gbox.size(); ++i) grads->detection.regression[g][i] = cfg.lambda_box * gbox[i];
    }
  }
  if (!seg_logits.empty()) {
    const std::size_t E = seg_logits.extent(2);
    for (std::size_t e = 0; e < E; ++e) {
      Tensor ge(seg_logits.shape());
      const Real l = masked_bce(seg_logits, seg_targets.rasters, seg_targets.valid, e, grads ? &ge : nullptr);
      out.seg.push_back(l);
      const Real w = cfg.seg_weight(e);
      out.segmentation += w * l;
      if (grads) {
        for (std::size_t i = 0; i < ge.size(); ++i) grads->segmentation[i] += w * ge[i];
      }
    }
  }
  out.total = out.detection + out.segmentation;
  if (!std::isfinite(out.total)) throw NumericError("total_loss: non-finite loss");
  return out;
}

}  // namespace ego3rt::heads
