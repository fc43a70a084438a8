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

// Command-line front end: gen-scenes, train, eval, infer, viz, config.
// Exit codes: 0 success, 2 configuration error, 3 numeric error, 1 anything else.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "ego3rt/errors.hpp"
#include "ego3rt/harness/checkpoint.hpp"
#include "ego3rt/harness/config.hpp"
#include "ego3rt/harness/eval.hpp"
#include "ego3rt/harness/parallel.hpp"
#include "ego3rt/harness/train.hpp"
#include "ego3rt/numerics/rng.hpp"

namespace fs = std::filesystem;
using namespace ego3rt;
using namespace ego3rt::harness;

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

RunConfig config_or_defaults(const std::string& path) {
  return path.empty() ? RunConfig::defaults() : load_config(path);
}

fs::path scene_dir(const std::string& arg) {
  const fs::path p(arg);
  return fs::is_directory(p) ? p : p.parent_path();
}

int gen_scenes(std::size_t count, std::uint64_t seed, const std::string& out, const std::string& config_path) {
  RunConfig cfg = config_or_defaults(config_path);
  cfg.scenes.count = count;
  cfg.scenes.seed = seed;
  cfg.scenes.dir.clear();
  const auto scenes = make_scene_set(cfg, worker_count());
  save_scene_set(out, scenes);
  std::size_t boxes = 0;
  for (const auto& s : scenes) boxes += s.boxes.size();
  std::printf("wrote %zu scenes (%zu boxes) to %s\n", scenes.size(), boxes, out.c_str());
  return 0;
}

int train_cmd(const std::string& config_path) {
  const RunConfig cfg = load_config(config_path);
  const TrainResult r = train(cfg, worker_count(cfg.optim.batch));
  if (!r.log.empty())
    std::printf("steps %zu  first loss %.6f  last loss %.6f\n", r.log.size(), r.log.front().loss.total,
                r.log.back().loss.total);
  std::printf("checkpoint %s\n", r.checkpoint.string().c_str());
  return 0;
}

LoadedCheckpoint open_checkpoint(const std::string& ckpt, const std::string& config_path) {
  if (config_path.empty()) return load_checkpoint(ckpt);
  const RunConfig cfg = load_config(config_path);
  return load_checkpoint(ckpt, &cfg);
}

int eval_cmd(const std::string& ckpt, const std::string& scenes_dir, const std::string& config_path,
             const std::string& out) {
  const LoadedCheckpoint ck = open_checkpoint(ckpt, config_path);
  const auto scenes = load_scene_set(scenes_dir, ck.config.scenes.scene);
  const EvalResult r = evaluate(ck.model, scenes, ck.config, worker_count());
  std::cout << r.report.text() << "centers within one cell: " << r.centers_within_cell << " / " << r.truth.size()
            << "\n";
  if (!out.empty()) write_eval(out, r);
  return 0;
}

int infer_cmd(const std::string& ckpt, const std::string& scene_arg, const std::string& viz, bool predictions,
              const std::string& config_path) {
  const LoadedCheckpoint ck = open_checkpoint(ckpt, config_path);
  const std::vector<SyntheticScene> scenes{load_scene(scene_dir(scene_arg), ck.config.scenes.scene)};
  const EvalResult r = evaluate(ck.model, scenes, ck.config);
  write_scene_viz(viz, r.scenes[0], scenes[0], ck.model, ck.config);
  if (predictions) {
    std::ofstream pred(fs::path(viz) / "predictions.txt");
    heads::write_boxes(pred, r.predictions);
    heads::write_boxes(std::cout, r.predictions);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ego3rt: imaginary-eye BEV perception on synthetic multi-camera scenes"};
  app.require_subcommand(1);

  std::size_t count = 4;
  std::uint64_t seed = 1;
  std::string out, config_path, ckpt, scenes_dir, scene, viz_dir = "viz";

  auto* gen = app.add_subcommand("gen-scenes", "Generate and save synthetic scenes");
  gen->add_option("--count", count, "Number of scenes")->required();
  gen->add_option("--seed", seed, "Base seed")->required();
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--config", config_path, "Run configuration supplying scene settings");

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a scene directory");
  ev->add_option("--ckpt", ckpt, "Checkpoint directory or manifest")->required();
  ev->add_option("--scenes", scenes_dir, "Directory of scene_<i> subdirectories")->required();
  ev->add_option("--config", config_path, "Override the checkpoint's configuration");
  ev->add_option("--out", out, "Write metrics.txt, metrics.kv and predictions here");

  auto* inf = app.add_subcommand("infer", "Run one scene and write predictions plus visualizations");
  inf->add_option("--ckpt", ckpt, "Checkpoint directory or manifest")->required();
  inf->add_option("--scene", scene, "Scene directory or its scene.json")->required();
  inf->add_option("--viz", viz_dir, "Output directory")->required();
  inf->add_option("--config", config_path, "Override the checkpoint's configuration");

  auto* vz = app.add_subcommand("viz", "Write visualizations for one scene");
  vz->add_option("--ckpt", ckpt, "Checkpoint directory or manifest")->required();
  vz->add_option("--scene", scene, "Scene directory or its scene.json")->required();
  vz->add_option("--out", viz_dir, "Output directory (default: viz)");
  vz->add_option("--config", config_path, "Override the checkpoint's configuration");

  auto* cf = app.add_subcommand("config", "Print the resolved configuration (defaults when no file is given)");
  cf->add_option("--config", config_path, "Run configuration to resolve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*gen) return gen_scenes(count, seed, out, config_path);
    if (*tr) return train_cmd(config_path);
    if (*ev) return eval_cmd(ckpt, scenes_dir, config_path, out);
    if (*inf) return infer_cmd(ckpt, scene, viz_dir, true, config_path);
    if (*vz) return infer_cmd(ckpt, scene, viz_dir, false, config_path);
    if (*cf) {
      std::cout << format_config(config_or_defaults(config_path));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericExit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
