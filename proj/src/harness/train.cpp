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

#include "ego3rt/harness/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ego3rt/errors.hpp"
#include "ego3rt/harness/checkpoint.hpp"
#include "ego3rt/harness/parallel.hpp"
#include "ego3rt/numerics/rng.hpp"

namespace ego3rt::harness {

std::vector<SyntheticScene> make_scene_set(const RunConfig& config, std::size_t workers) {
  if (!config.scenes.dir.empty()) return load_scene_set(config.scenes.dir, config.scenes.scene);
  std::vector<SyntheticScene> scenes(config.scenes.count);
  parallel_for(scenes.size(), workers, [&](std::size_t i) {
    scenes[i] = gen_scene(mix_seed(config.scenes.seed, i), config.scenes.scene);
  });
  return scenes;
}

std::vector<SyntheticScene> load_scene_set(const std::filesystem::path& dir, const SceneConfig& config) {
  std::vector<SyntheticScene> scenes;
  for (std::size_t i = 0;; ++i) {
    const auto sub = dir / ("scene_" + std::to_string(i));
    if (!std::filesystem::exists(sub / "scene.json")) break;
    scenes.push_back(load_scene(sub, config));
  }
  if (scenes.empty()) throw ConfigError("no scene_<i> directories under " + dir.string());
  return scenes;
}

void save_scene_set(const std::filesystem::path& dir, const std::vector<SyntheticScene>& scenes) {
  for (std::size_t i = 0; i < scenes.size(); ++i) save_scene(dir / ("scene_" + std::to_string(i)), scenes[i]);
}

TrainingSample make_sample(const SyntheticScene& scene, const RunConfig& config, const BevTransform& transform) {
  TrainingSample s;
  s.input = {scene.rig, scene.images};
  const auto& raster = config.scenes.scene.raster;
  if (transform.is_identity()) {
    s.boxes = scene.boxes;
    s.segmentation = {scene.rasters, scene.raster_valid};
  } else {
    s.warp = std::make_shared<BevWarp>(transform, config.model.bev);
    const AugmentedBoxes moved = augment_boxes(scene.boxes, transform, config.model.bev);
    for (std::size_t i = 0; i < moved.boxes.size(); ++i)
      if (!moved.cropped[i]) s.boxes.push_back(moved.boxes[i]);
    const BevWarp raster_warp(transform, raster);
    Tensor rasters = raster_warp.forward(scene.rasters);
    for (auto& v : rasters.values()) v = v > Real(0.5) ? 1 : 0;
    s.segmentation = {std::move(rasters), raster_warp.warp_mask(scene.raster_valid)};
  }
  s.detection = heads::build_detection_targets(s.boxes, config.model.bev, config.loss.groups, config.heat_sigma);
  return s;
}

heads::LossBreakdown sample_loss(Ego3rtModel& model, const TrainingSample& sample, const RunConfig& config,
                                 bool backward) {
  Ego3rtModel::Cache cache;
  const ModelOutput out = model.forward(sample.input, sample.warp.get(), backward ? &cache : nullptr);
  heads::LossGrads grads;
  const heads::LossBreakdown loss = heads::total_loss(out.detection, out.seg_logits, sample.detection,
                                                      sample.segmentation, config.loss, backward ? &grads : nullptr);
  if (backward) model.backward(grads, cache);
  return loss;
}

namespace {

bool frozen(const std::string& name, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes)
    if (name.compare(0, p.size(), p) == 0) return true;
  return false;
}

void accumulate(heads::LossBreakdown& into, const heads::LossBreakdown& x, Real w) {
  auto add = [w](std::vector<Real>& a, const std::vector<Real>& b) {
    if (a.empty()) a.assign(b.size(), 0);
    for (std::size_t i = 0; i < b.size(); ++i) a[i] += w * b[i];
  };
  into.total += w * x.total;
  into.detection += w * x.detection;
  into.segmentation += w * x.segmentation;
  add(into.cls, x.cls);
  add(into.box, x.box);
  add(into.seg, x.seg);
}

}  // namespace

Trainer::Trainer(const RunConfig& config, std::vector<SyntheticScene> scenes, std::size_t workers)
    : config_(config), scenes_(std::move(scenes)), workers_(std::max<std::size_t>(workers, 1)), model_(config.model) {
  config_.validate();
  if (scenes_.empty()) throw ConfigError("trainer: no scenes");
  model_.init(config_.seed);
  model_.visit([&](const std::string& name, Param& p) {
    params_.push_back(&p);
    names_.push_back(name);
    update_.push_back(p.trainable && !frozen(name, config_.optim.freeze));
    velocity_.emplace_back(p.value.shape());
  });
}

std::vector<Real> Trainer::scene_gradient(Ego3rtModel& model, std::size_t scene, std::size_t sample_index,
                                          heads::LossBreakdown& loss) const {
  const BevTransform transform = config_.augment.any()
                                     ? BevTransform::sample(config_.augment, mix_seed(config_.seed, sample_index))
                                     : BevTransform{};
  const TrainingSample sample = make_sample(scenes_[scene], config_, transform);
  model.zero_grads();
  loss = sample_loss(model, sample, config_);
  std::vector<Real> flat;
  model.visit([&](const std::string&, Param& p) { flat.insert(flat.end(), p.grad.values().begin(), p.grad.values().end()); });
  return flat;
}

StepReport Trainer::step() {
  const std::size_t B = config_.optim.batch;
  std::vector<std::vector<Real>> grads(B);
  std::vector<heads::LossBreakdown> losses(B);
  auto run = [&](Ego3rtModel& m, std::size_t b) {
    const std::size_t index = steps_ * B + b;
    grads[b] = scene_gradient(m, index % scenes_.size(), index, losses[b]);
  };
  try {
    if (workers_ <= 1 || B == 1) {
      for (std::size_t b = 0; b < B; ++b) run(model_, b);
    } else {
      parallel_for(B, workers_, [&](std::size_t b) {
        Ego3rtModel clone = model_;
        run(clone, b);
      });
    }
  } catch (const NumericError& e) {
    heads::LossBreakdown unknown;
    unknown.total = unknown.detection = unknown.segmentation = std::numeric_limits<Real>::quiet_NaN();
    dump(e.what(), unknown);
    throw NumericError("training step " + std::to_string(steps_ + 1) + ": " + e.what());
  }

  // Reduce in batch order so the result does not depend on the worker count.
  StepReport report;
  const Real w = Real(1) / static_cast<Real>(B);
  std::vector<Real> total(grads[0].size(), 0);
  for (std::size_t b = 0; b < B; ++b) {
    accumulate(report.loss, losses[b], w);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += w * grads[b][i];
  }

  Real sq = 0;
  {
    std::size_t off = 0;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      const std::size_t n = params_[k]->value.size();
      if (update_[k])
        for (std::size_t i = 0; i < n; ++i) sq += total[off + i] * total[off + i];
      off += n;
    }
  }
  report.grad_norm = std::sqrt(sq);
  if (!std::isfinite(report.loss.total)) {
    dump("non-finite loss", report.loss);
    throw NumericError("training step " + std::to_string(steps_ + 1) + ": non-finite loss");
  }
  if (!std::isfinite(report.grad_norm)) {
    dump("non-finite gradient", report.loss);
    throw NumericError("training step " + std::to_string(steps_ + 1) + ": non-finite gradient");
  }
  const Real clip = config_.optim.grad_clip > 0 && report.grad_norm > config_.optim.grad_clip
                        ? config_.optim.grad_clip / report.grad_norm
                        : Real(1);

  std::size_t off = 0;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    const std::size_t n = p.value.size();
    // The reduced gradient is left in Param::grad for inspection.
    for (std::size_t i = 0; i < n; ++i) p.grad[i] = total[off + i];
    if (update_[k]) {
      Tensor& v = velocity_[k];
      for (std::size_t i = 0; i < n; ++i) {
        v[i] = config_.optim.momentum * v[i] + clip * total[off + i];
        p.value[i] -= config_.optim.learning_rate * v[i];
      }
    }
    off += n;
  }
  report.step = ++steps_;
  return report;
}

void Trainer::dump(const std::string& reason, const heads::LossBreakdown& loss) {
  if (!dump_on_failure) return;
  const auto dir = std::filesystem::path(config_.output_dir) / ("failure_step_" + std::to_string(steps_ + 1));
  save_checkpoint(dir, model_, config_, steps_);
  std::ofstream out(dir / "diagnostic.txt");
  out.precision(17);
  out << "reason=" << reason << "\nstep=" << steps_ + 1 << "\ntotal=" << loss.total
      << "\ndetection=" << loss.detection << "\nsegmentation=" << loss.segmentation << "\n";
  const std::size_t B = config_.optim.batch;
  for (std::size_t b = 0; b < B; ++b) out << "scene=" << (steps_ * B + b) % scenes_.size() << "\n";
  for (std::size_t k = 0; k < params_.size(); ++k)
    if (!params_[k]->value.all_finite() || !params_[k]->grad.all_finite()) out << "nonfinite_param=" << names_[k] << "\n";
}

std::string loss_csv_header(const RunConfig& config) {
  std::string h = "step,total,detection,segmentation";
  for (std::size_t g = 0; g < config.loss.groups.groups.size(); ++g)
    h += ",cls" + std::to_string(g) + ",box" + std::to_string(g);
  for (const auto& e : config.scenes.scene.elements) h += ",seg_" + e;
  return h + ",grad_norm";
}

std::string loss_csv_row(const StepReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << r.step << ',' << r.loss.total << ',' << r.loss.detection << ',' << r.loss.segmentation;
  for (std::size_t g = 0; g < r.loss.cls.size(); ++g) out << ',' << r.loss.cls[g] << ',' << r.loss.box[g];
  for (Real s : r.loss.seg) out << ',' << s;
  out << ',' << r.grad_norm;
  return out.str();
}

TrainResult train(const RunConfig& config, std::size_t workers) {
  config.validate();
  const std::filesystem::path out_dir(config.output_dir);
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream cfg(out_dir / "config.json");
    cfg << format_config(config);
  }
  Trainer trainer(config, make_scene_set(config, workers), workers);
  std::ofstream csv(out_dir / "loss.csv");
  csv << loss_csv_header(config) << "\n";
  TrainResult result;
  auto checkpoint = [&](std::size_t step) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%06zu", step);
    result.checkpoint = out_dir / name;
    save_checkpoint(result.checkpoint, trainer.model(), config, step);
  };
  for (std::size_t s = 0; s < config.optim.steps; ++s) {
    result.log.push_back(trainer.step());
    csv << loss_csv_row(result.log.back()) << "\n";
    const std::size_t done = trainer.steps_done();
    if (config.optim.checkpoint_every > 0 && done % config.optim.checkpoint_every == 0 && done != config.optim.steps)
      checkpoint(done);
  }
  csv.flush();
  checkpoint(trainer.steps_done());
  return result;
}

}  // namespace ego3rt::harness
