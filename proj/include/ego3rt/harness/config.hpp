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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ego3rt/harness/augment.hpp"
#include "ego3rt/harness/model.hpp"
#include "ego3rt/harness/scene.hpp"
#include "ego3rt/heads/losses.hpp"

namespace ego3rt::harness {

struct SceneSetConfig {
  std::size_t count = 4;
  std::uint64_t seed = 1;
  std::string dir;  // load scene_<i> subdirectories from here instead of generating
  SceneConfig scene = SceneConfig::desk();
};

struct OptimConfig {
  Real learning_rate = 0.01;
  Real momentum = 0.9;
  Real grad_clip = 5;  // global L2 norm; 0 disables
  std::size_t steps = 2000;
  std::size_t batch = 1;
  std::size_t checkpoint_every = 0;  // 0: final checkpoint only
  std::vector<std::string> freeze;   // parameter-name prefixes kept fixed
};

struct RunConfig {
  std::uint64_t seed = 7;  // weights and augmentation
  std::string output_dir = "run";
  SceneSetConfig scenes;
  ModelConfig model;
  heads::LossConfig loss;
  Real heat_sigma = 1;  // target Gaussian, in BEV cells
  OptimConfig optim;
  AugmentConfig augment;
  Real score_threshold = 0.3;

  static RunConfig defaults();

  // Fills the derived fields: decoder view count from the rig, raster grid
  // and valid annulus from the BEV grid, the segmentation ratio and the eye
  // radii, class counts per group from the loss groups.
  void resolve();
  void validate() const;

  // FNV-1a over the canonical architecture description (model, classes,
  // elements, groups). Checkpoints record it.
  std::uint64_t model_hash() const;
};

// Unknown keys and type mismatches raise ConfigError naming the key path.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
std::string format_config(const RunConfig& config);

std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace ego3rt::harness
