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

#include "ego3rt/harness/config.hpp"
#include "ego3rt/harness/model.hpp"
#include "ego3rt/harness/scene.hpp"
#include "ego3rt/heads/metrics.hpp"

namespace ego3rt::harness {

struct SceneOutputs {
  std::vector<heads::Box> predictions;  // scene id = index in the scene set
  ModelOutput output;
};

struct EvalResult {
  heads::MetricsReport report;
  std::vector<heads::Box> predictions;
  std::vector<heads::Box> truth;
  std::vector<SceneOutputs> scenes;
  std::size_t centers_within_cell = 0;  // ground-truth boxes with a same-class prediction within one BEV cell
};

// Runs the model on every scene (in parallel), decodes 3x3 heatmap peaks at
// the score threshold and computes mAP, TP errors, NDS and IoU pooled over
// all scenes.
EvalResult evaluate(const Ego3rtModel& model, const std::vector<SyntheticScene>& scenes, const RunConfig& config,
                    std::size_t workers = 1);

// Metrics of given predictions and segmentation logits (one per scene).
heads::MetricsReport score(const std::vector<heads::Box>& predictions, const std::vector<heads::Box>& truth,
                           const std::vector<Tensor>& seg_logits, const std::vector<SyntheticScene>& scenes,
                           const RunConfig& config);

// Ground-truth boxes that have a prediction of the same class and scene whose
// BEV center lies within `radius`.
std::size_t centers_within(const std::vector<heads::Box>& predictions, const std::vector<heads::Box>& truth,
                           Real radius);

// Writes eyes_polar.ppm, eyes_rect.ppm, mask_<element>.ppm and boxes.ppm
// for one evaluated scene.
void write_scene_viz(const std::filesystem::path& dir, const SceneOutputs& outputs, const SyntheticScene& scene,
                     const Ego3rtModel& model, const RunConfig& config);

// Writes metrics.txt, metrics.kv and predictions_scene_<i>.txt into dir.
void write_eval(const std::filesystem::path& dir, const EvalResult& result);

}  // namespace ego3rt::harness
