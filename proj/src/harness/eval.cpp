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

#include "ego3rt/harness/eval.hpp"

#include <cmath>
#include <fstream>

#include "ego3rt/errors.hpp"
#include "ego3rt/harness/parallel.hpp"
#include "ego3rt/harness/viz.hpp"

namespace ego3rt::harness {

std::size_t centers_within(const std::vector<heads::Box>& predictions, const std::vector<heads::Box>& truth,
                           Real radius) {
  std::size_t hits = 0;
  for (const auto& g : truth)
    for (const auto& p : predictions)
      if (p.cls == g.cls && p.scene == g.scene && std::hypot(p.x - g.x, p.y - g.y) <= radius) {
        ++hits;
        break;
      }
  return hits;
}

heads::MetricsReport score(const std::vector<heads::Box>& predictions, const std::vector<heads::Box>& truth,
                           const std::vector<Tensor>& seg_logits, const std::vector<SyntheticScene>& scenes,
                           const RunConfig& config) {
  if (seg_logits.size() != scenes.size()) throw DimensionError("score: one segmentation map per scene expected");
  heads::MetricsReport r;
  const std::size_t classes = config.scenes.scene.classes.size();
  r.map = heads::compute_map(predictions, truth, classes);
  r.tp = heads::compute_tp_errors(predictions, truth, classes);
  r.nds = heads::compute_nds(r.map.map, r.tp.as_array());
  for (const auto& c : config.scenes.scene.classes) r.class_names.push_back(c.name);
  r.element_names = config.scenes.scene.elements;

  // Pool cells of every scene by stacking the rasters along rows.
  if (!scenes.empty()) {
    const Shape& s = scenes[0].rasters.shape();
    Tensor logits(Shape{s[0] * scenes.size(), s[1], s[2]}), rasters(logits.shape());
    std::vector<std::uint8_t> valid;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      require_shape(scenes[i].rasters, s, "score rasters");
      require_shape(seg_logits[i], s, "score logits");
      std::copy(seg_logits[i].values().begin(), seg_logits[i].values().end(), logits.data() + i * seg_logits[i].size());
      std::copy(scenes[i].rasters.values().begin(), scenes[i].rasters.values().end(),
                rasters.data() + i * scenes[i].rasters.size());
      valid.insert(valid.end(), scenes[i].raster_valid.begin(), scenes[i].raster_valid.end());
    }
    r.iou = heads::compute_iou(logits, rasters, valid);
  }
  return r;
}

EvalResult evaluate(const Ego3rtModel& model, const std::vector<SyntheticScene>& scenes, const RunConfig& config,
                    std::size_t workers) {
  EvalResult result;
  result.scenes.resize(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t i) {
    SceneOutputs& so = result.scenes[i];
    so.output = model.forward({scenes[i].rig, scenes[i].images}, nullptr, nullptr);
    so.predictions = heads::decode_detections(so.output.detection, config.model.bev, config.loss.groups,
                                              config.score_threshold, i);
  });
  std::vector<Tensor> seg;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& p = result.scenes[i].predictions;
    result.predictions.insert(result.predictions.end(), p.begin(), p.end());
    for (auto b : scenes[i].boxes) {
      b.scene = i;
      result.truth.push_back(b);
    }
    seg.push_back(result.scenes[i].output.seg_logits);
  }
  result.report = score(result.predictions, result.truth, seg, scenes, config);
  result.centers_within_cell = centers_within(result.predictions, result.truth, config.model.bev.cell_size);
  return result;
}

void write_scene_viz(const std::filesystem::path& dir, const SceneOutputs& outputs, const SyntheticScene& scene,
                     const Ego3rtModel& model, const RunConfig& config) {
  std::filesystem::create_directories(dir);
  const auto& grid = model.decoder.grid();
  write_ppm(dir / "eyes_polar.ppm", polar_heat(outputs.output.eye_features, grid));
  write_ppm(dir / "eyes_rect.ppm", rect_heat(outputs.output.eye_features, grid, config.model.bev));
  for (std::size_t e = 0; e < config.scenes.scene.elements.size(); ++e)
    write_ppm(dir / ("mask_" + config.scenes.scene.elements[e] + ".ppm"),
              mask_overlay(outputs.output.seg_logits, scene.rasters, scene.raster_valid, e));
  write_ppm(dir / "boxes.ppm", box_canvas(config.model.bev, 4, scene.boxes, outputs.predictions));
}

void write_eval(const std::filesystem::path& dir, const EvalResult& result) {
  std::filesystem::create_directories(dir);
  std::ofstream txt(dir / "metrics.txt");
  txt << result.report.text() << "centers within one cell: " << result.centers_within_cell << " / "
      << result.truth.size() << "\n";
  std::ofstream kv(dir / "metrics.kv");
  kv << result.report.key_values() << "centers_within_cell=" << result.centers_within_cell
     << "\ntruth_boxes=" << result.truth.size() << "\n";
  for (std::size_t i = 0; i < result.scenes.size(); ++i) {
    std::ofstream pred(dir / ("predictions_scene_" + std::to_string(i) + ".txt"));
    heads::write_boxes(pred, result.scenes[i].predictions);
    if (!pred) throw IoError("cannot write predictions to " + dir.string());
  }
  if (!txt || !kv) throw IoError("cannot write evaluation outputs to " + dir.string());
}

}  // namespace ego3rt::harness
