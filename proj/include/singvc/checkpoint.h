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

// Checkpoint container:
//
//   "SVCKPT\0\0"  u32 version  u64 header_bytes  header (JSON)
//   f64 payload: parameters, buffers, Adam m, Adam v in header order
//   u64 FNV-1a of everything before it
//
// All integers and floats are little-endian. Doubles are stored verbatim so
// a reload is bit-exact.

#ifndef SINGVC_CHECKPOINT_H_
#define SINGVC_CHECKPOINT_H_

#include <map>
#include <string>
#include <vector>

#include "singvc/training.h"

namespace singvc {

constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  FeatureOptions features;  // cache_dir is not stored
  std::vector<std::string> speakers;
  MelNormalizer normalizer;
  std::map<std::string, SpeakerF0Profile> f0_profiles;
  ad::ParameterSet params;
  TrainState state;

  int SpeakerIndex(const std::string& name) const;
};

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path);
// Throws IoError on unreadable, truncated, corrupt or wrong-version files.
Checkpoint LoadCheckpoint(const std::string& path);
// Additionally throws ConfigError when the stored model config differs.
Checkpoint LoadCheckpoint(const std::string& path,
                          const ModelConfig& expected);

// Short digest of a model config, stored in the header.
std::string ModelConfigHash(const ModelConfig& config);

// Builds a model with the checkpoint's weights and normalization buffers.
Model ModelFromCheckpoint(const Checkpoint& checkpoint);

}  // namespace singvc

#endif  // SINGVC_CHECKPOINT_H_
