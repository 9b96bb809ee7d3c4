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

#include "singvc/conversion.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "singvc/checkpoint.h"

namespace singvc {

double VowelMeanF0(const Utterance& utterance, const F0Track& f0) {
  const std::vector<bool> vowel = utterance.VowelFrames();
  if (vowel.size() != f0.values.size()) {
    throw ValidationError("utterance '" + utterance.id + "': " +
                          std::to_string(vowel.size()) +
                          " annotated frames but " +
                          std::to_string(f0.values.size()) + " F0 frames");
  }
  double sum = 0.0;
  long count = 0;
  for (size_t i = 0; i < vowel.size(); ++i) {
    if (vowel[i] && f0.values[i] > 0.0) {
      sum += f0.values[i];
      ++count;
    }
  }
  if (count == 0) {
    throw ValidationError("utterance '" + utterance.id +
                          "' has no voiced vowel frames");
  }
  return sum / count;
}

double ComputeF0Ratio(const SpeakerF0Profile& profile, double source_mean) {
  if (profile.means.empty()) {
    throw ValidationError("F0 profile is empty");
  }
  if (!(source_mean > 0.0) || !std::isfinite(source_mean)) {
    throw ValidationError("source mean F0 must be positive");
  }
  double sum = 0.0;
  for (double m : profile.means) {
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw ValidationError("F0 profile means must be positive");
    }
    sum += m;
  }
  return sum / (static_cast<double>(profile.means.size()) * source_mean);
}

F0Track ScaleF0(const F0Track& f0, double nu, int key_shift,
                double* clamped_fraction) {
  if (!(nu > 0.0) || !std::isfinite(nu)) {
    throw ValidationError("F0 ratio must be positive");
  }
  const double factor = nu * std::exp2(key_shift / 12.0);
  F0Track out = f0;
  long voiced = 0, clamped = 0;
  for (double& v : out.values) {
    if (v <= 0.0) continue;
    ++voiced;
    const double scaled = v * factor;
    v = std::clamp(scaled, kScaledF0Min, kScaledF0Max);
    if (v != scaled) ++clamped;
  }
  if (clamped_fraction != nullptr) {
    *clamped_fraction =
        voiced == 0 ? 0.0 : static_cast<double>(clamped) / voiced;
  }
  return out;
}

void ConversionRequest::Validate() const {
  if (nu_mode == NuMode::kManual && (!(nu > 0.0) || !std::isfinite(nu))) {
    throw ValidationError("manual nu must be positive");
  }
  if (target_speaker.empty()) {
    throw ValidationError("conversion needs a target speaker");
  }
}

std::string ConversionDiagnostics::ToJson() const {
  return nlohmann::json{{"target_speaker", target_speaker},
                        {"nu", nu},
                        {"key_shift", key_shift},
                        {"source_mean_f0", source_mean_f0},
                        {"target_profile_means", target_profile_means},
                        {"frames", frames},
                        {"clamped_voiced_fraction", clamped_voiced_fraction},
                        {"warnings", warnings},
                        {"source_f0", source_f0},
                        {"converted_f0", converted_f0}}
      .dump(2);
}

ConversionResult Convert(const ConversionRequest& request,
                         const Checkpoint& checkpoint) {
  request.Validate();
  const int target = checkpoint.SpeakerIndex(request.target_speaker);
  ConversionDiagnostics diag;
  diag.target_speaker = request.target_speaker;
  diag.key_shift = request.key_shift;
  const auto profile = checkpoint.f0_profiles.find(request.target_speaker);
  if (profile != checkpoint.f0_profiles.end()) {
    diag.target_profile_means = profile->second.means;
  }
  switch (request.nu_mode) {
    case NuMode::kAuto:
      if (profile == checkpoint.f0_profiles.end()) {
        throw ValidationError("speaker '" + request.target_speaker +
                              "' has no F0 profile; pass nu explicitly");
      }
      diag.source_mean_f0 =
          VowelMeanF0(request.utterance, request.features.f0);
      diag.nu = ComputeF0Ratio(profile->second, diag.source_mean_f0);
      break;
    case NuMode::kManual:
      diag.nu = request.nu;
      break;
    case NuMode::kNone:
      diag.nu = 1.0;
      break;
  }
  const F0Track scaled = ScaleF0(request.features.f0, diag.nu,
                                 request.key_shift,
                                 &diag.clamped_voiced_fraction);
  if (diag.clamped_voiced_fraction > kClampWarningFraction) {
    std::ostringstream msg;
    msg << diag.clamped_voiced_fraction * 100.0
        << "% of voiced frames were clamped to [" << kScaledF0Min << ", "
        << kScaledF0Max << "] Hz";
    diag.warnings.push_back(msg.str());
  }

  // Only the source tracks are used; the source mel and speaker are not.
  Example source;
  source.utterance = request.utterance;
  source.features = request.features;
  // T x 0 keeps the frame count without a mel to normalize.
  source.features.mel.frames.resize(request.features.f0.values.size(), 0);
  source.speaker = target;
  const PhonemeInventory inventory;
  ModelInput input =
      MakeModelInput(source, inventory, checkpoint.normalizer, &scaled);

  const Model model = ModelFromCheckpoint(checkpoint);
  const Batch batch = MakeBatch({input}, checkpoint.normalizer.mean);
  ad::Tape tape(false);
  const nn::Pass pass{&tape, const_cast<ad::ParameterSet*>(&model.params()),
                      false, nullptr};
  const ForwardResult result = model.Forward(pass, batch, false);

  ConversionResult out;
  out.mel.frames = checkpoint.normalizer.Denormalize(result.PostMel(0));
  out.mel.config = checkpoint.features.frame;
  diag.frames = out.mel.NumFrames();
  diag.source_f0 = request.features.f0.values;
  diag.converted_f0 = scaled.values;
  out.diagnostics = std::move(diag);
  return out;
}

}  // namespace singvc
