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

#ifndef SINGVC_CONVERSION_H_
#define SINGVC_CONVERSION_H_

#include <string>
#include <vector>

#include "singvc/corpus.h"
#include "singvc/signal.h"

namespace singvc {

struct Checkpoint;

// Mean F0 over frames that are inside vowel phones and voiced. Throws
// ValidationError when no such frame exists.
double VowelMeanF0(const Utterance& utterance, const F0Track& f0);

// Vowel mean F0 of each of a speaker's utterances.
struct SpeakerF0Profile {
  std::vector<double> means;
};

// nu = sum(means) / (N * source_mean).
double ComputeF0Ratio(const SpeakerF0Profile& profile, double source_mean);

// Pitch range the scaled contour is clamped to.
constexpr double kScaledF0Min = 60.0;
constexpr double kScaledF0Max = 1000.0;
// Clamping more than this fraction of voiced frames raises a warning.
constexpr double kClampWarningFraction = 0.2;

// Multiplies voiced frames by nu * 2^(key_shift / 12) and clamps them to
// [kScaledF0Min, kScaledF0Max]; unvoiced frames stay exactly 0.
// `clamped_fraction` receives the share of voiced frames that were clamped.
F0Track ScaleF0(const F0Track& f0, double nu, int key_shift = 0,
                double* clamped_fraction = nullptr);

enum class NuMode { kAuto, kManual, kNone };

struct ConversionRequest {
  Utterance utterance;     // source phones and durations
  FeatureRecord features;  // source F0, RMSE and positions
  std::string target_speaker;
  NuMode nu_mode = NuMode::kAuto;
  double nu = 1.0;  // used in manual mode
  int key_shift = 0;

  // Throws ValidationError on a non-positive manual nu.
  void Validate() const;
};

struct ConversionDiagnostics {
  std::string target_speaker;
  double nu = 1.0;
  int key_shift = 0;
  double source_mean_f0 = 0.0;  // 0 when nu was not derived from it
  std::vector<double> target_profile_means;
  long frames = 0;
  double clamped_voiced_fraction = 0.0;
  std::vector<std::string> warnings;
  std::vector<double> source_f0;
  std::vector<double> converted_f0;

  std::string ToJson() const;
};

struct ConversionResult {
  MelSpectrogram mel;  // de-normalized log-mel, y_hat
  ConversionDiagnostics diagnostics;
};

// Free-running synthesis of the source content with the target speaker's
// embedding and a rescaled F0 contour. The source speaker is never looked up.
ConversionResult Convert(const ConversionRequest& request,
                         const Checkpoint& checkpoint);

}  // namespace singvc

#endif  // SINGVC_CONVERSION_H_
