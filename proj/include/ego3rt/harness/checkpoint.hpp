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

#include "ego3rt/harness/config.hpp"
#include "ego3rt/harness/model.hpp"

namespace ego3rt::harness {

// A checkpoint directory holds manifest.txt (key=value lines: format,
// config_hash, step, then one "tensor=<name> <shape> <file>" line per
// parameter), one EGT1 file per parameter and the run's config.json.
void save_checkpoint(const std::filesystem::path& dir, Ego3rtModel& model, const RunConfig& config,
                     std::size_t step);

struct LoadedCheckpoint {
  RunConfig config;
  Ego3rtModel model;
  std::size_t step = 0;
};

// `path` is the checkpoint directory or its manifest. The stored config is
// used unless `expected` is given; either way the manifest hash must match
// or VersionError is raised.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const RunConfig* expected = nullptr);

}  // namespace ego3rt::harness
