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

// JSON forms of the configuration structs. Readers start from the current
// value and overwrite only the keys present; an unknown key is a ConfigError
// that names it.

#ifndef SINGVC_SERIALIZE_H_
#define SINGVC_SERIALIZE_H_

#include <string>

#include "json.hpp"
#include "singvc/model.h"
#include "singvc/training.h"

namespace singvc {

nlohmann::json ToJson(const FrameConfig& c);
nlohmann::json ToJson(const F0Config& c);
nlohmann::json ToJson(const ModelConfig& c);
nlohmann::json ToJson(const TrainConfig& c);

// `where` prefixes error messages, e.g. "model".
void FromJson(const nlohmann::json& j, const std::string& where,
              FrameConfig* c);
void FromJson(const nlohmann::json& j, const std::string& where, F0Config* c);
void FromJson(const nlohmann::json& j, const std::string& where,
              ModelConfig* c);
void FromJson(const nlohmann::json& j, const std::string& where,
              TrainConfig* c);

}  // namespace singvc

#endif  // SINGVC_SERIALIZE_H_
