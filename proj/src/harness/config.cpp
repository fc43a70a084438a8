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

#include "ego3rt/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ego3rt/errors.hpp"

namespace ego3rt::harness {

using nlohmann::json;

namespace {

// Reads optional keys of one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError("config: " + where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    try {
      out = node_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: " + where(key) + " has the wrong type");
    }
  }

  bool has(const char* key) const { return node_.contains(key); }

  // Calls fn(Reader&) on the sub-object when present.
  template <typename Fn>
  void child(const char* key, Fn fn) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    Reader r(node_.at(key), where(key));
    fn(r);
    r.finish();
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return node_.at(key);
  }

  std::string where(const std::string& key = "") const {
    const std::string base = path_.empty() ? "" : path_;
    if (key.empty()) return base.empty() ? "<root>" : base;
    return base.empty() ? key : base + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : node_.items())
      if (!seen_.count(key)) throw ConfigError("config: unknown key " + where(key));
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

json model_json(const RunConfig& c) {
  const auto& m = c.model;
  const auto& d = m.decoder;
  return {{"layers", d.layers},
          {"channels", d.channels},
          {"pyramid_channels", d.pyramid_channels},
          {"heads", d.heads},
          {"points", d.points},
          {"scales", d.scales},
          {"ffn_hidden", d.ffn_hidden},
          {"positional_encoding", d.positional_encoding},
          {"offset_units", d.offset_units == attention::OffsetUnits::kFeaturePixels ? "feature_pixels" : "normalized"},
          {"eyes",
           {{"radial", m.eyes.radial_count},
            {"rays", m.eyes.ray_count},
            {"r_min", m.eyes.r_min},
            {"r_max", m.eyes.r_max},
            {"height", m.eyes.height}}},
          {"bev", {{"side", m.bev.side}, {"cell_size", m.bev.cell_size}}},
          {"encoder_blocks", m.encoder_blocks},
          {"seg_hidden", m.seg_hidden},
          {"seg_ratio", m.seg_ratio}};
}

json classes_json(const SceneConfig& s) {
  json out = json::array();
  for (const auto& c : s.classes)
    out.push_back({{"name", c.name}, {"length", c.length}, {"width", c.width}, {"height", c.height}, {"color", c.color}});
  return out;
}

json to_json(const RunConfig& c) {
  const auto& s = c.scenes.scene;
  json scenes = {{"count", c.scenes.count},
                 {"seed", c.scenes.seed},
                 {"dir", c.scenes.dir},
                 {"cameras", s.rig.cameras},
                 {"image_width", s.rig.image_width},
                 {"image_height", s.rig.image_height},
                 {"horizontal_fov_deg", s.rig.horizontal_fov_deg},
                 {"mount_height", s.rig.mount_height},
                 {"pitch_deg", s.rig.pitch_deg},
                 {"classes", classes_json(s)},
                 {"elements", s.elements},
                 {"min_objects", s.min_objects},
                 {"max_objects", s.max_objects},
                 {"place_min_radius", s.place_min_radius},
                 {"place_max_radius", s.place_max_radius},
                 {"place_max_abs", s.place_max_abs},
                 {"paint_map", s.paint_map},
                 {"road_half_width_min", s.road_half_width_min},
                 {"road_half_width_max", s.road_half_width_max},
                 {"road_offset_max", s.road_offset_max},
                 {"divider_half_width", s.divider_half_width}};
  json loss = {{"alpha", c.loss.alpha},       {"beta", c.loss.beta},         {"lambda_cls", c.loss.lambda_cls},
               {"lambda_box", c.loss.lambda_box}, {"lambda_seg", c.loss.lambda_seg}, {"groups", c.loss.groups.groups},
               {"heat_sigma", c.heat_sigma}};
  json optim = {{"learning_rate", c.optim.learning_rate}, {"momentum", c.optim.momentum},
                {"grad_clip", c.optim.grad_clip},         {"steps", c.optim.steps},
                {"batch", c.optim.batch},                 {"checkpoint_every", c.optim.checkpoint_every},
                {"freeze", c.optim.freeze}};
  const auto& a = c.augment;
  json augment = {{"hflip", a.hflip},
                  {"vflip", a.vflip},
                  {"rotate", a.rotate},
                  {"scale", a.scale},
                  {"probability", a.probability},
                  {"max_rotation_deg", a.max_rotation_deg},
                  {"scale_min", a.scale_min},
                  {"scale_max", a.scale_max}};
  return {{"seed", c.seed},   {"output_dir", c.output_dir}, {"scenes", scenes},
          {"model", model_json(c)}, {"loss", loss},          {"optim", optim},
          {"augment", augment}, {"eval", {{"score_threshold", c.score_threshold}}}};
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.loss.groups = heads::TaskGroups::one_per_class(c.scenes.scene.classes.size());
  c.resolve();
  return c;
}

void RunConfig::resolve() {
  auto& s = scenes.scene;
  model.decoder.views = s.rig.cameras;
  model.elements = s.elements.size();
  model.classes_per_group = loss.groups.classes_per_group();
  if (model.seg_ratio > 0) s.raster = {model.bev.side * model.seg_ratio, model.bev.cell_size / static_cast<Real>(model.seg_ratio)};
  s.raster_r_min = model.eyes.r_min;
  s.raster_r_max = model.eyes.r_max;
}

void RunConfig::validate() const {
  scenes.scene.validate();
  if (scenes.count == 0) throw ConfigError("config: scenes.count must be positive");
  model.validate();
  loss.validate();
  if (loss.groups.class_count() != scenes.scene.classes.size())
    throw ConfigError("config: loss.groups must cover every scene class exactly once");
  if (!loss.lambda_seg.empty() && loss.lambda_seg.size() != scenes.scene.elements.size())
    throw ConfigError("config: loss.lambda_seg needs one weight per element");
  if (!(heat_sigma > 0)) throw ConfigError("config: loss.heat_sigma must be positive");
  if (!(optim.learning_rate >= 0)) throw ConfigError("config: optim.learning_rate must be >= 0");
  if (!(optim.momentum >= 0 && optim.momentum < 1)) throw ConfigError("config: optim.momentum must be in [0, 1)");
  if (!(optim.grad_clip >= 0)) throw ConfigError("config: optim.grad_clip must be >= 0");
  if (optim.batch == 0) throw ConfigError("config: optim.batch must be positive");
  augment.validate();
  if (!(score_threshold > 0 && score_threshold < 1)) throw ConfigError("config: eval.score_threshold must be in (0, 1)");
  if (output_dir.empty()) throw ConfigError("config: output_dir is empty");
  if (scenes.scene.rig.image_width % (std::size_t{1} << model.decoder.scales) != 0 ||
      scenes.scene.rig.image_height % (std::size_t{1} << model.decoder.scales) != 0)
    throw ConfigError("config: image size must be divisible by 2^scales");
}

std::uint64_t RunConfig::model_hash() const {
  const json arch = {{"model", model_json(*this)},
                     {"views", model.decoder.views},
                     {"classes", scenes.scene.classes.size()},
                     {"elements", scenes.scene.elements},
                     {"groups", loss.groups.groups}};
  return fnv1a(arch.dump());
}

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  RunConfig c = RunConfig::defaults();
  Reader root(doc, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.child("scenes", [&](Reader& r) {
    auto& s = c.scenes.scene;
    r.get("count", c.scenes.count);
    r.get("seed", c.scenes.seed);
    r.get("dir", c.scenes.dir);
    r.get("cameras", s.rig.cameras);
    r.get("image_width", s.rig.image_width);
    r.get("image_height", s.rig.image_height);
    r.get("horizontal_fov_deg", s.rig.horizontal_fov_deg);
    r.get("mount_height", s.rig.mount_height);
    r.get("pitch_deg", s.rig.pitch_deg);
    if (r.has("classes")) {
      s.classes.clear();
      const json& list = r.raw("classes");
      if (!list.is_array()) throw ConfigError("config: scenes.classes must be an array");
      for (std::size_t i = 0; i < list.size(); ++i) {
        Reader cr(list[i], "scenes.classes[" + std::to_string(i) + "]");
        ObjectClass oc;
        cr.get("name", oc.name);
        cr.get("length", oc.length);
        cr.get("width", oc.width);
        cr.get("height", oc.height);
        cr.get("color", oc.color);
        cr.finish();
        s.classes.push_back(oc);
      }
      c.loss.groups = heads::TaskGroups::one_per_class(s.classes.size());
    }
    r.get("elements", s.elements);
    r.get("min_objects", s.min_objects);
    r.get("max_objects", s.max_objects);
    r.get("place_min_radius", s.place_min_radius);
    r.get("place_max_radius", s.place_max_radius);
    r.get("place_max_abs", s.place_max_abs);
    r.get("paint_map", s.paint_map);
    r.get("road_half_width_min", s.road_half_width_min);
    r.get("road_half_width_max", s.road_half_width_max);
    r.get("road_offset_max", s.road_offset_max);
    r.get("divider_half_width", s.divider_half_width);
  });
  root.child("model", [&](Reader& r) {
    auto& m = c.model;
    auto& d = m.decoder;
    r.get("layers", d.layers);
    r.get("channels", d.channels);
    r.get("pyramid_channels", d.pyramid_channels);
    r.get("heads", d.heads);
    r.get("points", d.points);
    r.get("scales", d.scales);
    r.get("ffn_hidden", d.ffn_hidden);
    r.get("positional_encoding", d.positional_encoding);
    std::string units;
    r.get("offset_units", units);
    if (units == "normalized") d.offset_units = attention::OffsetUnits::kNormalized;
    else if (units == "feature_pixels") d.offset_units = attention::OffsetUnits::kFeaturePixels;
    else if (!units.empty()) throw ConfigError("config: model.offset_units must be feature_pixels or normalized");
    r.child("eyes", [&](Reader& e) {
      e.get("radial", m.eyes.radial_count);
      e.get("rays", m.eyes.ray_count);
      e.get("r_min", m.eyes.r_min);
      e.get("r_max", m.eyes.r_max);
      e.get("height", m.eyes.height);
    });
    r.child("bev", [&](Reader& b) {
      b.get("side", m.bev.side);
      b.get("cell_size", m.bev.cell_size);
    });
    r.get("encoder_blocks", m.encoder_blocks);
    r.get("seg_hidden", m.seg_hidden);
    r.get("seg_ratio", m.seg_ratio);
  });
  root.child("loss", [&](Reader& r) {
    r.get("alpha", c.loss.alpha);
    r.get("beta", c.loss.beta);
    r.get("lambda_cls", c.loss.lambda_cls);
    r.get("lambda_box", c.loss.lambda_box);
    r.get("lambda_seg", c.loss.lambda_seg);
    r.get("groups", c.loss.groups.groups);
    r.get("heat_sigma", c.heat_sigma);
  });
  root.child("optim", [&](Reader& r) {
    r.get("learning_rate", c.optim.learning_rate);
    r.get("momentum", c.optim.momentum);
    r.get("grad_clip", c.optim.grad_clip);
    r.get("steps", c.optim.steps);
    r.get("batch", c.optim.batch);
    r.get("checkpoint_every", c.optim.checkpoint_every);
    r.get("freeze", c.optim.freeze);
  });
  root.child("augment", [&](Reader& r) {
    auto& a = c.augment;
    r.get("hflip", a.hflip);
    r.get("vflip", a.vflip);
    r.get("rotate", a.rotate);
    r.get("scale", a.scale);
    r.get("probability", a.probability);
    r.get("max_rotation_deg", a.max_rotation_deg);
    r.get("scale_min", a.scale_min);
    r.get("scale_max", a.scale_max);
  });
  root.child("eval", [&](Reader& r) { r.get("score_threshold", c.score_threshold); });
  root.finish();
  c.resolve();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace ego3rt::harness
