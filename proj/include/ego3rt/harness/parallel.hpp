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

#include <cstddef>
#include <functional>

namespace ego3rt::harness {

// Hardware concurrency, capped by EGO3RT_THREADS when set (values < 1 count
// as 1) and by `limit` when nonzero.
std::size_t worker_count(std::size_t limit = 0);

// Runs fn(i) for i in [0, n) on up to `workers` threads. Callers write
// results by index, so the outcome never depends on scheduling. The first
// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace ego3rt::harness
