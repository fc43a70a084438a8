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

#include "ego3rt/heads/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ego3rt/errors.hpp"

namespace ego3rt::heads {

std::vector<Real> interpolated_precision(const std::vector<Real>& recall,
                                         const std::vector<Real>& precision) {
  std::vector<Real> out(101, 0);
  if (recall.empty()) return out;
  const std::size_t n = recall.size();
  for (std::size_t i = 0; i <= 100; ++i) {
    const Real x = static_cast<Real>(i) / 100;
    if (x > recall.back()) continue;
    if (x < recall.front()) {
      out[i] = precision.front();
      continue;
    }
    // Last j with recall[j] <= x (recall is nondecreasing).
    const std::size_t j =
        static_cast<std::size_t>(std::upper_bound(recall.begin(), recall.end(), x) - recall.begin()) - 1;
    if (j == n - 1 || recall[j] == x) {
      out[i] = precision[j];
    } else {
      const Real slope = (precision[j + 1] - precision[j]) / (recall[j + 1] - recall[j]);
      out[i] = precision[j] + slope * (x - recall[j]);
    }
  }
  return out;
}

Real calc_ap(const std::vector<Real>& precision101, Real min_recall, Real min_precision) {
  if (precision101.size() != 101) throw DimensionError("calc_ap: expected 101 precision samples");
  const std::size_t first = static_cast<std::size_t>(std::lround(100 * min_recall)) + 1;
  Real sum = 0;
  for (std::size_t i = first; i < 101; ++i) sum += std::max(precision101[i] - min_precision, Real(0));
  return sum / static_cast<Real>(101 - first) / (1 - min_precision);
}

namespace {

Real center_distance(const Box& a, const Box& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Real yaw_difference(Real a, Real b) {
  const Real two_pi = 2 * std::numbers::pi_v<Real>;
  Real d = std::fmod(std::abs(a - b), two_pi);
  return d > std::numbers::pi_v<Real> ? two_pi - d : d;
}

Real aligned_iou(const Box& a, const Box& b) {
  const Real inter = std::min(a.l, b.l) * std::min(a.w, b.w) * std::min(a.h, b.h);
  return inter / (a.l * a.w * a.h + b.l * b.w * b.h - inter);
}

}  // namespace

ClassMatches match_class(const std::vector<Box>& predictions, const std::vector<Box>& ground_truth,
                         std::size_t cls, Real threshold) {
  ClassMatches m;
  std::vector<std::size_t> gts;
  for (std::size_t i = 0; i < ground_truth.size(); ++i)
    if (ground_truth[i].cls == cls) gts.push_back(i);
  m.gt_count = gts.size();
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i].cls == cls) m.order.push_back(i);
  std::stable_sort(m.order.begin(), m.order.end(),
                   [&](std::size_t a, std::size_t b) { return predictions[a].score > predictions[b].score; });
  std::vector<std::uint8_t> taken(gts.size(), 0);
  for (std::size_t i : m.order) {
    const Box& p = predictions[i];
    Real best = std::numeric_limits<Real>::infinity();
    std::size_t best_k = SIZE_MAX;
    for (std::size_t k = 0; k < gts.size(); ++k) {
      const Box& g = ground_truth[gts[k]];
      if (taken[k] || g.scene != p.scene) continue;
      const Real d = center_distance(p, g);
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    if (best_k != SIZE_MAX && best < threshold) {
      taken[best_k] = 1;
      m.tp.push_back(1);
      m.matched_gt.push_back(gts[best_k]);
    } else {
      m.tp.push_back(0);
      m.matched_gt.push_back(SIZE_MAX);
    }
  }
  return m;
}

MapResult compute_map(const std::vector<Box>& predictions, const std::vector<Box>& ground_truth,
                      std::size_t class_count, const std::array<Real, 4>& thresholds) {
  MapResult r;
  for (std::size_t cls = 0; cls < class_count; ++cls) {
    std::array<Real, 4> ap{};
    bool has_gt = false;
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      const ClassMatches m = match_class(predictions, ground_truth, cls, thresholds[t]);
      if (m.gt_count == 0) break;
      has_gt = true;
      std::vector<Real> recall, precision;
      Real tp = 0, fp = 0;
      for (auto hit : m.tp) {
        (hit ? tp : fp) += 1;
        precision.push_back(tp / (tp + fp));
        recall.push_back(tp / static_cast<Real>(m.gt_count));
      }
      ap[t] = calc_ap(interpolated_precision(recall, precision));
    }
    if (!has_gt) continue;
    r.classes.push_back(cls);
    r.ap.push_back(ap);
  }
  if (r.classes.empty()) return r;
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    Real s = 0;
    for (const auto& a : r.ap) s += a[t];
    r.threshold_ap[t] = s / static_cast<Real>(r.ap.size());
  }
  r.map = std::accumulate(r.threshold_ap.begin(), r.threshold_ap.end(), Real(0)) /
          static_cast<Real>(thresholds.size());
  return r;
}

TpErrors compute_tp_errors(const std::vector<Box>& predictions, const std::vector<Box>& ground_truth,
                           std::size_t class_count) {
  std::array<Real, 5> sum{};
  std::size_t classes = 0;
  for (std::size_t cls = 0; cls < class_count; ++cls) {
    const ClassMatches m = match_class(predictions, ground_truth, cls, kTpThreshold);
    if (m.gt_count == 0) continue;
    ++classes;
    std::array<Real, 5> err{};
    std::size_t hits = 0;
    for (std::size_t s = 0; s < m.order.size(); ++s) {
      if (!m.tp[s]) continue;
      const Box& p = predictions[m.order[s]];
      const Box& g = ground_truth[m.matched_gt[s]];
      err[0] += center_distance(p, g);
      err[1] += 1 - aligned_iou(p, g);
      err[2] += yaw_difference(p.yaw, g.yaw);
      err[3] += std::hypot(p.vx - g.vx, p.vy - g.vy);
      ++hits;
    }
    for (std::size_t k = 0; k < 5; ++k) sum[k] += hits ? err[k] / static_cast<Real>(hits) : Real(1);
  }
  TpErrors e;
  if (classes == 0) return e;
  const Real n = static_cast<Real>(classes);
  e.ate = sum[0] / n;
  e.ase = sum[1] / n;
  e.aoe = sum[2] / n;
  e.ave = sum[3] / n;
  e.aae = sum[4] / n;
  return e;
}

Real compute_nds(Real map, const std::array<Real, 5>& tp_errors) {
  Real s = 5 * map;
  for (Real e : tp_errors) s += 1 - std::min(Real(1), e);
  return s / 10;
}

std::vector<Real> compute_iou(const Tensor& logits, const Tensor& rasters,
                              const std::vector<std::uint8_t>& valid, Real threshold) {
  require_shape(rasters, logits.shape(), "compute_iou rasters");
  const std::size_t E = logits.extent(2), cells = logits.extent(0) * logits.extent(1);
  if (valid.size() != cells) throw DimensionError("compute_iou: mask size mismatch");
  std::vector<Real> iou(E);
  for (std::size_t e = 0; e < E; ++e) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < cells; ++i) {
      if (!valid[i]) continue;
      const bool p = sigmoid(logits[i * E + e]) > threshold;
      const bool g = rasters[i * E + e] > Real(0.5);
      inter += p && g;
      uni += p || g;
    }
    iou[e] = uni == 0 ? Real(1) : static_cast<Real>(inter) / static_cast<Real>(uni);
  }
  return iou;
}

namespace {

std::string name_or_index(const std::vector<std::string>& names, std::size_t i, const char* stem) {
  return i < names.size() ? names[i] : stem + std::to_string(i);
}

}  // namespace

std::string MetricsReport::text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "mAP   " << map.map << "\n"
      << "mATE  " << tp.ate << "\n"
      << "mASE  " << tp.ase << "\n"
      << "mAOE  " << tp.aoe << "\n"
      << "mAVE  " << tp.ave << "\n"
      << "mAAE  " << tp.aae << "\n"
      << "NDS   " << nds << "\n";
  for (std::size_t k = 0; k < map.classes.size(); ++k) {
    out << "AP " << name_or_index(class_names, map.classes[k], "class");
    for (Real a : map.ap[k]) out << ' ' << a;
    out << "  (0.5/1/2/4 m)\n";
  }
  for (std::size_t e = 0; e < iou.size(); ++e) out << "IoU " << name_or_index(element_names, e, "element") << ' ' << iou[e] << "\n";
  return out.str();
}

std::string MetricsReport::key_values() const {
  std::ostringstream out;
  out.precision(17);
  out << "map=" << map.map << "\n"
      << "mate=" << tp.ate << "\nmase=" << tp.ase << "\nmaoe=" << tp.aoe << "\nmave=" << tp.ave
      << "\nmaae=" << tp.aae << "\nnds=" << nds << "\n";
  for (std::size_t k = 0; k < map.classes.size(); ++k) {
    const std::string c = name_or_index(class_names, map.classes[k], "class");
    for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) {
      out << "ap." << c << "." << kDistanceThresholds[t] << "=" << map.ap[k][t] << "\n";
    }
  }
  for (std::size_t e = 0; e < iou.size(); ++e) out << "iou." << name_or_index(element_names, e, "element") << "=" << iou[e] << "\n";
  return out.str();
}

}  // namespace ego3rt::heads
