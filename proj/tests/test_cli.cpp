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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ego3rt/harness/checkpoint.hpp"
#include "ego3rt/harness/config.hpp"
#include "support/micro_run.hpp"

namespace ego3rt::harness {
namespace {

namespace fs = std::filesystem;
using testing::micro_run;
using testing::scratch_dir;

int run(const std::string& args) {
  const std::string cmd = std::string(EGO3RT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Cli, EndToEndOnMicroRun) {
  const fs::path dir = scratch_dir("cli");
  const fs::path scenes = dir / "scenes", run_dir = dir / "run";
  RunConfig cfg = micro_run(run_dir.string());
  write_text(dir / "gen.json", format_config(cfg));
  ASSERT_EQ(run("gen-scenes --count 2 --seed 5 --out " + scenes.string() + " --config " + (dir / "gen.json").string()), 0);
  EXPECT_TRUE(fs::exists(scenes / "scene_0" / "scene.json"));
  EXPECT_TRUE(fs::exists(scenes / "scene_1" / "view_1.ppm"));

  cfg.scenes.dir = scenes.string();
  write_text(dir / "run.json", format_config(cfg));
  ASSERT_EQ(run("train --config " + (dir / "run.json").string()), 0);
  const fs::path ckpt = run_dir / "ckpt_000003";
  ASSERT_TRUE(fs::exists(ckpt / "manifest.txt"));
  EXPECT_NE(read_text(run_dir / "loss.csv").find('\n'), std::string::npos);
  EXPECT_EQ(load_checkpoint(ckpt).step, 3u);

  ASSERT_EQ(run("eval --ckpt " + ckpt.string() + " --scenes " + scenes.string() + " --out " + (dir / "eval").string()), 0);
  const std::string kv = read_text(dir / "eval" / "metrics.kv");
  EXPECT_NE(kv.find("truth_boxes="), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "eval" / "predictions_scene_1.txt"));

  ASSERT_EQ(run("infer --ckpt " + ckpt.string() + " --scene " + (scenes / "scene_0").string() + " --viz " +
                (dir / "infer").string()),
            0);
  for (const char* f : {"predictions.txt", "eyes_polar.ppm", "eyes_rect.ppm", "mask_drivable.ppm", "mask_divider.ppm",
                        "boxes.ppm"})
    EXPECT_TRUE(fs::exists(dir / "infer" / f)) << f;

  ASSERT_EQ(run("viz --ckpt " + (ckpt / "manifest.txt").string() + " --scene " +
                (scenes / "scene_1" / "scene.json").string() + " --out " + (dir / "viz").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "viz" / "eyes_rect.ppm"));
  EXPECT_FALSE(fs::exists(dir / "viz" / "predictions.txt"));
}

TEST(Cli, BadConfigExitsWithTwo) {
  const fs::path dir = scratch_dir("cli_bad");
  write_text(dir / "unknown.json", R"({"optim": {"learning_rat": 0.1}})");
  EXPECT_EQ(run("train --config " + (dir / "unknown.json").string()), 2);
  write_text(dir / "invalid.json", R"({"model": {"bev": {"side": 0}}})");
  EXPECT_EQ(run("train --config " + (dir / "invalid.json").string()), 2);
  EXPECT_EQ(run("train"), 2);
  EXPECT_EQ(run("frobnicate"), 2);
}

TEST(Cli, DivergentTrainingExitsWithThreeAndDumps) {
  const fs::path dir = scratch_dir("cli_nan");
  RunConfig cfg = micro_run((dir / "run").string());
  cfg.optim.learning_rate = 1e300;
  cfg.optim.grad_clip = 0;
  cfg.optim.steps = 5;
  write_text(dir / "run.json", format_config(cfg));
  EXPECT_EQ(run("train --config " + (dir / "run.json").string()), 3);
  bool dumped = false;
  for (const auto& e : fs::directory_iterator(dir / "run")) dumped = dumped || fs::exists(e.path() / "diagnostic.txt");
  EXPECT_TRUE(dumped);
}

TEST(Cli, ConfigPrintsAParseableDefault) {
  const fs::path dir = scratch_dir("cli_config");
  const std::string cmd = std::string(EGO3RT_CLI) + " config > " + (dir / "default.json").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(format_config(load_config(dir / "default.json")), format_config(RunConfig::defaults()));
}

TEST(Cli, MissingCheckpointIsAnError) {
  const fs::path dir = scratch_dir("cli_missing");
  EXPECT_EQ(run("eval --ckpt " + (dir / "absent").string() + " --scenes " + dir.string()), 1);
}

}  // namespace
}  // namespace ego3rt::harness
