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

// Resolved settings of one command-line invocation. Layers apply in order
// defaults, model preset, config file, flags; later layers win.
//
// File layout (every key optional):
//   {"preset": "default"|"desk", "joint": bool,
//    "frame": {...}, "f0": {...}, "model": {...}, "train": {...},
//    "toy": {...}, "convert": {...},
//    "paths": {"manifest", "eval_manifest", "out", "cache_dir", "resume",
//              "checkpoint", "annotation", "source_wav", "features",
//              "diagnostics"}}

#ifndef SINGVC_RUN_CONFIG_H_
#define SINGVC_RUN_CONFIG_H_

#include <string>

#include "json.hpp"
#include "singvc/model.h"
#include "singvc/training.h"

namespace singvc {

struct RunPaths {
  std::string manifest;
  std::string eval_manifest;
  std::string out;  // output directory, or output file for convert
  std::string cache_dir;
  std::string resume;  // checkpoint to continue training from
  std::string checkpoint;
  std::string annotation;  // manifest holding the conversion source
  std::string source_wav;  // overrides the annotation's audio path
  std::string features;    // feature sidecar to plot
  std::string diagnostics;  // conversion diagnostics to plot

  bool operator==(const RunPaths&) const = default;
};

struct ToyOptions {
  int speakers = 4;
  int utterances = 10;
  uint64_t seed = 7;

  bool operator==(const ToyOptions&) const = default;
};

struct ConvertOptions {
  std::string speaker;
  std::string nu = "auto";  // "auto", "none" or a positive number
  int key_shift = 0;
  std::string utterance;  // id inside the annotation; empty takes the only one
  int griffin_lim_iterations = 60;

  bool operator==(const ConvertOptions&) const = default;
};

struct RunConfig {
  std::string preset = "default";
  // Require at least one speech and one singing speaker before training.
  bool joint = true;
  FrameConfig frame;
  F0Config f0;
  ModelConfig model;
  TrainConfig train;  // train.seed is the run seed
  ToyOptions toy;
  ConvertOptions convert;
  RunPaths paths;

  FeatureOptions Features() const;
  // Throws ConfigError naming the first invalid field.
  void Validate() const;
  bool operator==(const RunConfig&) const = default;
};

// Model widths for a named preset; throws ConfigError on an unknown name.
ModelConfig PresetModel(const std::string& name);

nlohmann::json ToJson(const RunConfig& config);
// Overlays the keys present in `j` onto `config`. A "preset" key resets the
// model section to that preset before any "model" keys apply. Unknown keys
// at any level are a ConfigError naming them.
void ApplyJson(const nlohmann::json& j, RunConfig* config);

// Parses a JSON config file; IoError when unreadable, ConfigError when
// malformed.
nlohmann::json ReadConfigFile(const std::string& path);

// Writes the resolved config as `<dir>/<name>` and returns the path.
std::string WriteRunConfig(const RunConfig& config, const std::string& dir,
                           const std::string& name = "run_config.json");

}  // namespace singvc

#endif  // SINGVC_RUN_CONFIG_H_
