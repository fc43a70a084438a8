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

#include "ego3rt/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ego3rt/errors.hpp"

namespace ego3rt {

double GradReport::worst() const {
  double w = 0;
  for (const auto& e : entries) w = std::max(w, e.max_rel_error);
  return w;
}

GradReport grad_check(const std::function<double()>& loss, std::span<GradProbe> probes,
                      double step, std::size_t max_per_probe) {
  if (!(step > 0)) throw DomainError("grad_check: step must be positive");
  GradReport report;
  report.step = step;
  for (auto& probe : probes) {
    if (probe.values.size() != probe.analytic.size()) {
      throw DimensionError("grad_check: probe '" + probe.name + "' has mismatched gradient");
    }
    GradReport::Entry entry{probe.name, 0.0, 0};
    const std::size_t n = probe.values.size();
    const std::size_t stride =
        (max_per_probe > 0 && n > max_per_probe) ? (n + max_per_probe - 1) / max_per_probe : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double analytic = probe.analytic[i];
      if (!std::isfinite(analytic)) {
        throw NumericError("grad_check: non-finite analytic gradient in '" + probe.name + "'");
      }
      const Real saved = probe.values[i];
      probe.values[i] = static_cast<Real>(saved + step);
      const double up = loss();
      probe.values[i] = static_cast<Real>(saved - step);
      const double down = loss();
      probe.values[i] = saved;
      const double numeric = (up - down) / (2 * step);
      if (!std::isfinite(numeric)) {
        throw NumericError("grad_check: non-finite numeric gradient in '" + probe.name + "'");
      }
      const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
      entry.max_rel_error = std::max(entry.max_rel_error, std::abs(analytic - numeric) / scale);
      ++entry.checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace ego3rt
