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
#include <span>
#include <string>
#include <vector>

#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt {

// One block of scalars to perturb, plus the analytic gradient already computed
// for them. `values` is mutated in place during the check and restored after.
struct GradProbe {
  std::string name;
  std::span<Real> values;
  std::span<const Real> analytic;
};

struct GradReport {
  struct Entry {
    std::string name;
    double max_rel_error = 0;
    std::size_t checked = 0;
  };
  std::vector<Entry> entries;
  double step = 0;

  double worst() const;
};

// Central differences (f(x+h) - f(x-h)) / 2h against the analytic gradient,
// per scalar. Relative error is |a - n| / max(1, |a|, |n|).
// When max_per_probe > 0 only that many evenly strided scalars are checked per
// probe. Throws NumericError on a non-finite analytic or numeric gradient.
GradReport grad_check(const std::function<double()>& loss, std::span<GradProbe> probes,
                      double step, std::size_t max_per_probe = 0);

// Chains backward closures in reverse registration order.
class BackwardChain {
 public:
  void push(std::function<void()> step) { steps_.push_back(std::move(step)); }
  void run() {
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
  }
  std::size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

 private:
  std::vector<std::function<void()>> steps_;
};

}  // namespace ego3rt
