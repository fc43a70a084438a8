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
#include <vector>

#include "ego3rt/eyes/eye_grid.hpp"
#include "ego3rt/heads/boxes.hpp"

namespace ego3rt::harness {

// Binary P6 pixmap from an H x W x 3 tensor in [0, 1] (values are clamped).
void write_ppm(const std::filesystem::path& path, const Tensor& rgb);
Tensor read_ppm(const std::filesystem::path& path);

// Mean over the last axis: (N x C) -> (N).
Tensor channel_mean(const Tensor& features);

// Min-max normalized heat colors for an H x W scalar map. A constant map
// renders as the uniform middle color.
Tensor heat_colors(const Tensor& scalar, std::size_t height, std::size_t width);

// Channel-mean eye features as an R x S image (row = ring, column = ray).
Tensor polar_heat(const Tensor& eye_features, const eyes::EyeGrid& grid);
// The same channel mean resampled onto the BEV grid; cells outside the eye
// annulus are black.
Tensor rect_heat(const Tensor& eye_features, const eyes::EyeGrid& grid, const eyes::BevGrid& bev);

// Per-element overlay on the raster grid: gray where prediction and truth
// agree on foreground, green for missed truth, red for false positives,
// dark blue outside the valid mask.
Tensor mask_overlay(const Tensor& logits, const Tensor& rasters, const std::vector<std::uint8_t>& valid,
                    std::size_t element);

// Box footprints on a BEV canvas (side = grid.side * scale pixels): ground
// truth in green, predictions in red.
Tensor box_canvas(const eyes::BevGrid& grid, std::size_t scale, const std::vector<heads::Box>& truth,
                  const std::vector<heads::Box>& predictions);

}  // namespace ego3rt::harness
