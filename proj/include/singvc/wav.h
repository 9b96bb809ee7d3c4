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

#ifndef SINGVC_WAV_H_
#define SINGVC_WAV_H_

#include <string>

#include "singvc/signal.h"

namespace singvc {

// Mono 16-bit PCM or 32-bit IEEE float. Multi-channel files are rejected.
AudioClip ReadWav(const std::string& path);
// If expected_rate > 0 a different file rate is an IoError.
AudioClip ReadWav(const std::string& path, int expected_rate);

// Mono 16-bit PCM; samples are clipped to [-1, 1].
void WriteWav(const std::string& path, const AudioClip& clip);

}  // namespace singvc

#endif  // SINGVC_WAV_H_
