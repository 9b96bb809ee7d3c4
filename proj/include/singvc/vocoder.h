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

// Mel inversion and Griffin-Lim phase reconstruction.

#ifndef SINGVC_VOCODER_H_
#define SINGVC_VOCODER_H_

#include <vector>

#include "singvc/signal.h"

namespace singvc {

struct GriffinLimConfig {
  int iterations = 60;
  double momentum = 0.99;
  // Magnitudes are raised to this power before reconstruction.
  double power = 1.2;

  void Validate() const;
};

// Output peak after normalization.
constexpr double kVocoderPeak = 0.95;

// T x (fft_size/2 + 1) non-negative magnitudes: per frame, the non-negative
// least-squares solution of filterbank * x = exp(mel) - log floor. The
// solution is sparse, which keeps resolved harmonics at their own bins.
Matrix MelToLinear(const MelSpectrogram& mel);

// Fast Griffin-Lim from zero phase. A momentum step that would raise the
// spectral convergence error falls back to a plain projection step, and a
// step that still raises it is discarded, so the recorded error never
// increases. Output is peak-normalized to kVocoderPeak; an input whose
// magnitudes never exceed 10x the log floor produces exact silence.
// `convergence` receives the error after each iteration when non-null.
AudioClip GriffinLim(const Matrix& linear, const FrameConfig& config,
                     const GriffinLimConfig& gl = {},
                     std::vector<double>* convergence = nullptr);

// MelToLinear followed by GriffinLim.
AudioClip Vocode(const MelSpectrogram& mel, const GriffinLimConfig& gl = {});

}  // namespace singvc

#endif  // SINGVC_VOCODER_H_
