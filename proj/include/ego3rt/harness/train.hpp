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
#include <memory>
#include <string>
#include <vector>

#include "ego3rt/harness/config.hpp"
#include "ego3rt/harness/model.hpp"
#include "ego3rt/harness/scene.hpp"
#include "ego3rt/heads/losses.hpp"

namespace ego3rt::harness {

// Generates scenes.count scenes from seeds mix_seed(scenes.seed, i), or loads
// scene_<i> subdirectories of scenes.dir when it is set.
std::vector<SyntheticScene> make_scene_set(const RunConfig& config, std::size_t workers = 1);
std::vector<SyntheticScene> load_scene_set(const std::filesystem::path& dir, const SceneConfig& config);
void save_scene_set(const std::filesystem::path& dir, const std::vector<SyntheticScene>& scenes);

// Model inputs and targets of one scene under one BEV transform.
struct TrainingSample {
  decoder::SceneInput input;
  heads::DetectionTargets detection;
  heads::SegTargets segmentation;
  std::vector<heads::Box> boxes;  // after the transform, cropped boxes dropped
  std::shared_ptr<BevWarp> warp;  // null for the identity
};

TrainingSample make_sample(const SyntheticScene& scene, const RunConfig& config, const BevTransform& transform);

// Forward, loss and backward for one sample; gradients accumulate into the
// model's parameters.
heads::LossBreakdown sample_loss(Ego3rtModel& model, const TrainingSample& sample, const RunConfig& config,
                                 bool backward = true);

struct StepReport {
  std::size_t step = 0;  // 1-based, after the update
  heads::LossBreakdown loss;  // batch mean
  Real grad_norm = 0;         // before clipping
};

// SGD with momentum over every trainable parameter except the frozen
// prefixes. Scene order is step * batch + b modulo the scene count.
class Trainer {
 public:
  Trainer(const RunConfig& config, std::vector<SyntheticScene> scenes, std::size_t workers = 1);

  // Throws NumericError on a non-finite loss or gradient (after writing a
  // dump under output_dir when dump_on_failure is set).
  StepReport step();

  Ego3rtModel& model() { return model_; }
  const RunConfig& config() const { return config_; }
  std::size_t steps_done() const { return steps_; }
  bool dump_on_failure = true;

 private:
  std::vector<Real> scene_gradient(Ego3rtModel& model, std::size_t scene, std::size_t sample_index,
                                   heads::LossBreakdown& loss) const;
  void dump(const std::string& reason, const heads::LossBreakdown& loss);

  RunConfig config_;
  std::vector<SyntheticScene> scenes_;
  std::size_t workers_;
  Ego3rtModel model_;
  std::vector<Param*> params_;       // visit order
  std::vector<std::string> names_;
  std::vector<std::uint8_t> update_; // trainable and not frozen
  std::vector<Tensor> velocity_;
  std::size_t steps_ = 0;
};

struct TrainResult {
  std::vector<StepReport> log;
  std::filesystem::path checkpoint;  // final
};

// Full run: scenes, steps, loss.csv, periodic and final checkpoints under
// output_dir (ckpt_<step>/), plus config.json.
TrainResult train(const RunConfig& config, std::size_t workers = 1);

std::string loss_csv_header(const RunConfig& config);
std::string loss_csv_row(const StepReport& report);

}  // namespace ego3rt::harness
