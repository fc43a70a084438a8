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

#include "ego3rt/harness/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "ego3rt/errors.hpp"
#include "ego3rt/numerics/egt_io.hpp"

namespace ego3rt::harness {

namespace {

constexpr const char* kFormat = "ego3rt-checkpoint-1";

std::string shape_field(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out.empty() ? "scalar" : out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, Ego3rtModel& model, const RunConfig& config,
                     std::size_t step) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "format=" << kFormat << "\n"
           << "config_hash=" << hex64(config.model_hash()) << "\n"
           << "step=" << step << "\n";
  model.visit([&](const std::string& name, Param& p) {
    const std::string file = name + ".egt";
    save_egt(dir / file, p.value);
    manifest << "tensor=" << name << ' ' << shape_field(p.value.shape()) << ' ' << file << "\n";
  });
  std::ofstream cfg(dir / "config.json");
  cfg << format_config(config);
  std::ofstream out(dir / "manifest.txt");
  out << manifest.str();
  if (!out || !cfg) throw IoError("cannot write checkpoint " + dir.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const RunConfig* expected) {
  if (!std::filesystem::exists(path)) throw IoError("no checkpoint at " + path.string());
  const std::filesystem::path dir = std::filesystem::is_directory(path) ? path : path.parent_path();
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw IoError("no checkpoint manifest in " + dir.string());
  std::map<std::string, std::string> keys;
  std::map<std::string, std::string> files;
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "tensor") {
      std::istringstream fields(value);
      std::string name, shape, file;
      fields >> name >> shape >> file;
      files[name] = file;
    } else {
      keys[key] = value;
    }
  }
  if (keys["format"] != kFormat) throw VersionError("checkpoint " + dir.string() + ": unknown format '" + keys["format"] + "'");

  LoadedCheckpoint ck{expected ? *expected : load_config(dir / "config.json"), {}, 0};
  if (keys["config_hash"] != hex64(ck.config.model_hash()))
    throw VersionError("checkpoint " + dir.string() + " was written for a different model configuration (hash " +
                       keys["config_hash"] + ", expected " + hex64(ck.config.model_hash()) + ")");
  ck.step = std::stoull(keys.count("step") ? keys["step"] : "0");
  ck.model = Ego3rtModel(ck.config.model);
  ck.model.visit([&](const std::string& name, Param& p) {
    const auto it = files.find(name);
    if (it == files.end()) throw VersionError("checkpoint " + dir.string() + " lacks tensor " + name);
    Tensor t = load_egt(dir / it->second);
    if (t.shape() != p.value.shape())
      throw VersionError("checkpoint tensor " + name + " has shape " + shape_string(t.shape()) + ", expected " +
                         shape_string(p.value.shape()));
    p.value = std::move(t);
  });
  return ck;
}

}  // namespace ego3rt::harness
