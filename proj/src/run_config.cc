// Copyright (c) 2026 The singvc Authors
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

#include "singvc/run_config.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "singvc/serialize.h"

namespace singvc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Visits (key, field) pairs of a flat section, rejecting unknown keys and
// values of the wrong type.
template <typename Visit>
void ReadSection(const json& j, const std::string& where, Visit&& visit) {
  if (!j.is_object()) throw ConfigError(where + " config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    visit([&](const char* key, auto&) { known = known || it.key() == key; });
    if (!known) {
      throw ConfigError("unknown " + where + " config key '" + it.key() + "'");
    }
  }
  visit([&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for " + where + " config key '" + key +
                        "': " + e.what());
    }
  });
}

}  // namespace

FeatureOptions RunConfig::Features() const {
  FeatureOptions o;
  o.frame = frame;
  o.f0 = f0;
  o.cache_dir = paths.cache_dir;
  return o;
}

void RunConfig::Validate() const {
  PresetModel(preset);
  frame.Validate();
  f0.Validate(frame.sample_rate);
  model.Validate();
  train.Validate();
  if (toy.speakers < 2) throw ConfigError("toy.speakers must be >= 2");
  if (toy.utterances < 1) throw ConfigError("toy.utterances must be >= 1");
  if (convert.griffin_lim_iterations < 1) {
    throw ConfigError("convert.griffin_lim_iterations must be >= 1");
  }
  if (model.mel_bins != frame.mel_bins) {
    throw ConfigError("model.mel_bins (" + std::to_string(model.mel_bins) +
                      ") must equal frame.mel_bins (" +
                      std::to_string(frame.mel_bins) + ")");
  }
}

ModelConfig PresetModel(const std::string& name) {
  if (name == "default") return ModelConfig{};
  if (name == "desk") return ModelConfig::Desk();
  throw ConfigError("unknown preset '" + name + "' (known: default, desk)");
}

json ToJson(const RunConfig& c) {
  return {{"preset", c.preset},
          {"joint", c.joint},
          {"frame", ToJson(c.frame)},
          {"f0", ToJson(c.f0)},
          {"model", ToJson(c.model)},
          {"train", ToJson(c.train)},
          {"toy",
           {{"speakers", c.toy.speakers},
            {"utterances", c.toy.utterances},
            {"seed", c.toy.seed}}},
          {"convert",
           {{"speaker", c.convert.speaker},
            {"nu", c.convert.nu},
            {"key_shift", c.convert.key_shift},
            {"utterance", c.convert.utterance},
            {"griffin_lim_iterations", c.convert.griffin_lim_iterations}}},
          {"paths",
           {{"manifest", c.paths.manifest},
            {"eval_manifest", c.paths.eval_manifest},
            {"out", c.paths.out},
            {"cache_dir", c.paths.cache_dir},
            {"resume", c.paths.resume},
            {"checkpoint", c.paths.checkpoint},
            {"annotation", c.paths.annotation},
            {"source_wav", c.paths.source_wav},
            {"features", c.paths.features},
            {"diagnostics", c.paths.diagnostics}}}};
}

void ApplyJson(const json& j, RunConfig* c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const char* kTop[] = {"preset", "joint", "frame",   "f0",   "model",
                               "train",  "toy",   "convert", "paths"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(std::begin(kTop), std::end(kTop), it.key()) ==
        std::end(kTop)) {
      throw ConfigError("unknown config key '" + it.key() + "'");
    }
  }
  try {
    if (j.contains("preset")) {
      c->preset = j.at("preset").get<std::string>();
      c->model = PresetModel(c->preset);
    }
    if (j.contains("joint")) c->joint = j.at("joint").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad top-level config value: ") + e.what());
  }
  if (j.contains("frame")) FromJson(j.at("frame"), "frame", &c->frame);
  if (j.contains("f0")) FromJson(j.at("f0"), "f0", &c->f0);
  if (j.contains("model")) FromJson(j.at("model"), "model", &c->model);
  if (j.contains("train")) FromJson(j.at("train"), "train", &c->train);
  if (j.contains("toy")) {
    ReadSection(j.at("toy"), "toy",
                [&](auto&& f) {
                  f("speakers", c->toy.speakers);
                  f("utterances", c->toy.utterances);
                  f("seed", c->toy.seed);
                });
  }
  if (j.contains("convert")) {
    ReadSection(j.at("convert"), "convert", [&](auto&& f) {
      f("speaker", c->convert.speaker);
      f("nu", c->convert.nu);
      f("key_shift", c->convert.key_shift);
      f("utterance", c->convert.utterance);
      f("griffin_lim_iterations", c->convert.griffin_lim_iterations);
    });
  }
  if (j.contains("paths")) {
    ReadSection(j.at("paths"), "paths", [&](auto&& f) {
      f("manifest", c->paths.manifest);
      f("eval_manifest", c->paths.eval_manifest);
      f("out", c->paths.out);
      f("cache_dir", c->paths.cache_dir);
      f("resume", c->paths.resume);
      f("checkpoint", c->paths.checkpoint);
      f("annotation", c->paths.annotation);
      f("source_wav", c->paths.source_wav);
      f("features", c->paths.features);
      f("diagnostics", c->paths.diagnostics);
    });
  }
}

json ReadConfigFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
}

std::string WriteRunConfig(const RunConfig& config, const std::string& dir,
                           const std::string& name) {
  std::error_code ec;
  if (!dir.empty()) fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir);
  const fs::path path = fs::path(dir) / name;
  std::ofstream out(path);
  out << ToJson(config).dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
  return path.string();
}

}  // namespace singvc
