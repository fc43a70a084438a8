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
#include <string>
#include <vector>

#include "ego3rt/heads/boxes.hpp"

namespace ego3rt::heads {

inline constexpr std::array<Real, 4> kDistanceThresholds{0.5, 1.0, 2.0, 4.0};
inline constexpr Real kTpThreshold = 2.0;

// Precision interpolated at the 101 recall points 0, 0.01, ..., 1 (linear
// interpolation of the raw curve, zero beyond the highest recall).
std::vector<Real> interpolated_precision(const std::vector<Real>& recall,
                                         const std::vector<Real>& precision);

// Mean of max(precision - min_precision, 0) over recall points above
// min_recall, normalized by (1 - min_precision).
Real calc_ap(const std::vector<Real>& precision101, Real min_recall = 0.1, Real min_precision = 0.1);

// One greedy matching pass for one class at one distance threshold.
// Predictions are taken by descending score (ties: input order); each
// claims the nearest unmatched ground truth of the same scene within the
// threshold (BEV center distance).
struct ClassMatches {
  std::vector<std::uint8_t> tp;        // per prediction, in processing order
  std::vector<std::size_t> order;      // prediction indices in processing order
  std::vector<std::size_t> matched_gt; // per processing step; SIZE_MAX when unmatched
  std::size_t gt_count = 0;
};
ClassMatches match_class(const std::vector<Box>& predictions, const std::vector<Box>& ground_truth,
                         std::size_t cls, Real threshold);

struct MapResult {
  Real map = 0;
  std::vector<std::size_t> classes;         // evaluated class ids (those with ground truth)
  std::vector<std::array<Real, 4>> ap;      // per evaluated class, per threshold
  std::array<Real, 4> threshold_ap{};       // averaged over classes
};

// Classes without ground truth are skipped; mAP averages the rest over all
// thresholds.
MapResult compute_map(const std::vector<Box>& predictions, const std::vector<Box>& ground_truth,
                      std::size_t class_count,
                      const std::array<Real, 4>& thresholds = kDistanceThresholds);

// Mean true-positive errors over matches at 2 m, averaged over classes with
// ground truth. A class without true positives contributes 1 to each error.
// ATE: BEV center distance; ASE: 1 - IoU of the aligned, centered boxes;
// AOE: smallest yaw difference; AVE: velocity L2; AAE: 0 (no attributes).
struct TpErrors {
  Real ate = 1, ase = 1, aoe = 1, ave = 1, aae = 1;

  std::array<Real, 5> as_array() const { return {ate, ase, aoe, ave, aae}; }
};
TpErrors compute_tp_errors(const std::vector<Box>& predictions, const std::vector<Box>& ground_truth,
                           std::size_t class_count);

// NDS = (5 mAP + sum_k (1 - min(1, tp_k))) / 10.
Real compute_nds(Real map, const std::array<Real, 5>& tp_errors);

// IoU per element after binarizing sigmoid(logit) > threshold, over valid
// cells. Empty union gives 1.
std::vector<Real> compute_iou(const Tensor& logits, const Tensor& rasters,
                              const std::vector<std::uint8_t>& valid, Real threshold = 0.5);

struct MetricsReport {
  MapResult map;
  TpErrors tp;
  Real nds = 0;
  std::vector<Real> iou;
  std::vector<std::string> element_names;
  std::vector<std::string> class_names;

  std::string text() const;
  std::string key_values() const;
};

}  // namespace ego3rt::heads
