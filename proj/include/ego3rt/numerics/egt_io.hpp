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

#include <filesystem>
#include <iosfwd>

#include "ego3rt/numerics/tensor.hpp"

namespace ego3rt {

// EGT1 tensor file: magic "EGT1", u32 rank, rank x u32 extents, then the
// row-major payload as little-endian float64.
void write_egt(std::ostream& out, const Tensor& tensor);
Tensor read_egt(std::istream& in);

void save_egt(const std::filesystem::path& path, const Tensor& tensor);
Tensor load_egt(const std::filesystem::path& path);

}  // namespace ego3rt
