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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "singvc/checkpoint.h"
#include "singvc/conversion.h"
#include "singvc/training.h"

namespace singvc {
namespace {

namespace fs = std::filesystem;

Utterance MakeUtterance(const std::vector<std::pair<std::string, int>>& phones) {
  const PhonemeInventory inv;
  Utterance u;
  u.id = "u";
  u.speaker_id = "s";
  for (const auto& [sym, dur] : phones) {
    u.phonemes.push_back({sym, inv.IsVowel(inv.Id(sym))});
    u.durations.push_back(dur);
  }
  return u;
}

TEST_CASE("vowel mean F0 uses voiced vowel frames only") {
  const Utterance u = MakeUtterance({{"p", 2}, {"a", 3}, {"t", 1}});
  CHECK(VowelMeanF0(u, {{0, 0, 200, 200, 200, 0}}) == 200.0);
  CHECK(VowelMeanF0(u, {{0, 0, 200, 0, 220, 0}}) == 210.0);
  // Consonant frames do not count, voiced or not.
  CHECK(VowelMeanF0(u, {{500, 90, 200, 0, 220, 999}}) == 210.0);
  CHECK_THROWS_AS(VowelMeanF0(u, {{100, 100, 0, 0, 0, 100}}), ValidationError);
  CHECK_THROWS_AS(VowelMeanF0(u, {{200, 200}}), ValidationError);
}

TEST_CASE("F0 ratio examples") {
  CHECK(ComputeF0Ratio({{150.0}}, 150.0) == 1.0);
  CHECK(ComputeF0Ratio({{200.0, 220.0}}, 105.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(ComputeF0Ratio({}, 100.0), ValidationError);
  CHECK_THROWS_AS(ComputeF0Ratio({{100.0}}, 0.0), ValidationError);
}

TEST_CASE("F0 ratio matches the formula and its symmetries") {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    SpeakerF0Profile profile;
    const int n = 1 + static_cast<int>(rng.Below(12));
    long double sum = 0.0L;
    for (int i = 0; i < n; ++i) {
      profile.means.push_back(rng.Uniform(80.0, 500.0));
      sum += profile.means.back();
    }
    const double source = rng.Uniform(80.0, 500.0);
    const double nu = ComputeF0Ratio(profile, source);
    CHECK(std::abs(nu - static_cast<double>(sum / (n * static_cast<long double>(
                                                          source)))) < 1e-9);

    // Powers of two scale exactly in floating point.
    SpeakerF0Profile doubled = profile;
    for (double& m : doubled.means) m *= 2.0;
    CHECK(ComputeF0Ratio(doubled, source) == 2.0 * nu);
    CHECK(ComputeF0Ratio(profile, 4.0 * source) == nu / 4.0);
    const double c = rng.Uniform(0.5, 3.0);
    SpeakerF0Profile scaled = profile;
    for (double& m : scaled.means) m *= c;
    CHECK(ComputeF0Ratio(scaled, source) == doctest::Approx(c * nu).epsilon(1e-12));
    CHECK(ComputeF0Ratio(profile, c * source) ==
          doctest::Approx(nu / c).epsilon(1e-12));

    SpeakerF0Profile shuffled = profile;
    std::reverse(shuffled.means.begin(), shuffled.means.end());
    CHECK(ComputeF0Ratio(shuffled, source) == doctest::Approx(nu).epsilon(1e-14));
  }
}

TEST_CASE("scaling F0 keeps the voicing pattern") {
  const F0Track f0{{0, 220, 0, 110, 330}};
  CHECK(ScaleF0(f0, 1.0).values == f0.values);
  CHECK(ScaleF0(f0, 2.0).values == std::vector<double>{0, 440, 0, 220, 660});
  CHECK(ScaleF0(f0, 1.0, 12).values == std::vector<double>{0, 440, 0, 220, 660});
  CHECK(ScaleF0(f0, 1.0, -12).values[1] == doctest::Approx(110.0));
  CHECK_THROWS_AS(ScaleF0(f0, 0.0), ValidationError);
  CHECK_THROWS_AS(ScaleF0(f0, -1.0), ValidationError);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    F0Track track;
    for (int i = 0; i < 50; ++i) {
      track.values.push_back(rng.Uniform() < 0.3 ? 0.0 : rng.Uniform(60, 900));
    }
    const F0Track out = ScaleF0(track, rng.Uniform(0.2, 3.0),
                                static_cast<int>(rng.Below(25)) - 12);
    for (size_t i = 0; i < track.values.size(); ++i) {
      CHECK((out.values[i] == 0.0) == (track.values[i] == 0.0));
      if (out.values[i] != 0.0) {
        CHECK(out.values[i] >= kScaledF0Min);
        CHECK(out.values[i] <= kScaledF0Max);
      }
    }
  }
}

TEST_CASE("clamping reports the clamped share of voiced frames") {
  const F0Track f0{{0, 100, 200, 400, 800}};
  double clamped = -1.0;
  const F0Track out = ScaleF0(f0, 2.0, 0, &clamped);
  CHECK(out.values == std::vector<double>{0, 200, 400, 800, 1000});
  CHECK(clamped == 0.25);
  ScaleF0(f0, 1.0, 0, &clamped);
  CHECK(clamped == 0.0);
}

TEST_CASE("conversion request validation") {
  ConversionRequest r;
  r.target_speaker = "spk";
  r.nu_mode = NuMode::kManual;
  r.nu = 0.0;
  CHECK_THROWS_AS(r.Validate(), ValidationError);
  r.nu = 1.5;
  CHECK_NOTHROW(r.Validate());
  r.target_speaker.clear();
  CHECK_THROWS_AS(r.Validate(), ValidationError);
}

// Speakers 110 Hz speech, 220 Hz speech and 196 Hz singing, briefly trained.
struct Trained {
  Corpus corpus;
  std::vector<Example> examples;
  Checkpoint checkpoint;
};

const Trained& TrainedToy() {
  static const Trained trained = [] {
    Trained t;
    const fs::path dir = fs::temp_directory_path() / "singvc_conversion_toy";
    fs::remove_all(dir);
    ToyCorpusSpec spec;
    spec.speakers = DefaultToySpeakers(3);
    spec.utterances_per_speaker = 2;
    t.corpus = GenerateToyCorpus(spec, dir.string());
    FeatureOptions options;
    t.examples = FeaturizeCorpus(t.corpus, options);
    ModelConfig model;
    model.phoneme_embed_dim = model.speaker_embed_dim = 8;
    model.encoder_out_dim = model.fused_dim = model.attention_dim = 8;
    model.decoder_rnn_dims = {12, 12};
    model.prenet_dims = {8, 8};
    model.cbhg_bank_size = 3;
    model.cbhg_channels = 8;
    model.cbhg_highway_layers = 1;
    TrainConfig train;
    train.warmup_steps = 5;
    train.total_steps = 10;
    train.batch_size = 3;
    Trainer trainer(t.examples, t.corpus.speakers.names(), model, train,
                    options);
    trainer.Run();
    t.checkpoint = trainer.MakeCheckpoint();
    return t;
  }();
  return trained;
}

ConversionRequest RequestFor(const Example& source, const std::string& target,
                             NuMode mode = NuMode::kAuto) {
  ConversionRequest r;
  r.utterance = source.utterance;
  r.features = source.features;
  r.target_speaker = target;
  r.nu_mode = mode;
  return r;
}

const Example& FindExample(const std::string& speaker) {
  for (const Example& e : TrainedToy().examples) {
    if (e.utterance.speaker_id == speaker) return e;
  }
  throw Error("no example for " + speaker);
}

TEST_CASE("conversion is deterministic and reports diagnostics") {
  const Trained& t = TrainedToy();
  const auto& names = t.corpus.speakers.names();
  const Example& source = FindExample(names[2]);
  const ConversionResult a = Convert(RequestFor(source, names[0]), t.checkpoint);
  const ConversionResult b = Convert(RequestFor(source, names[0]), t.checkpoint);
  CHECK(a.mel.frames == b.mel.frames);
  CHECK(a.mel.NumFrames() == source.features.NumFrames());
  CHECK(a.mel.frames.cols() == 80);
  CHECK(a.mel.frames.allFinite());

  const ConversionDiagnostics& d = a.diagnostics;
  const double source_mean = VowelMeanF0(source.utterance, source.features.f0);
  CHECK(d.source_mean_f0 == source_mean);
  CHECK(d.nu == ComputeF0Ratio(t.checkpoint.f0_profiles.at(names[0]),
                               source_mean));
  CHECK(d.converted_f0 == ScaleF0(source.features.f0, d.nu).values);
  CHECK(d.frames == source.features.NumFrames());
  const auto json = nlohmann::json::parse(d.ToJson());
  for (const char* key : {"nu", "source_mean_f0", "target_profile_means",
                          "frames", "clamped_voiced_fraction"}) {
    CHECK(json.contains(key));
  }
}

TEST_CASE("nu modes") {
  const Trained& t = TrainedToy();
  const auto& names = t.corpus.speakers.names();
  const Example& source = FindExample(names[1]);
  ConversionRequest r = RequestFor(source, names[0], NuMode::kNone);
  CHECK(Convert(r, t.checkpoint).diagnostics.nu == 1.0);
  r.nu_mode = NuMode::kManual;
  r.nu = 0.75;
  r.key_shift = 12;
  const ConversionResult out = Convert(r, t.checkpoint);
  CHECK(out.diagnostics.nu == 0.75);
  CHECK(out.diagnostics.converted_f0 == ScaleF0(source.features.f0, 0.75, 12).values);
  r.nu = 0.0;
  CHECK_THROWS_AS(Convert(r, t.checkpoint), ValidationError);
}

TEST_CASE("unknown target speaker lists the known ones") {
  const Trained& t = TrainedToy();
  const auto& names = t.corpus.speakers.names();
  const ConversionRequest r = RequestFor(FindExample(names[0]), "ghost");
  try {
    Convert(r, t.checkpoint);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("ghost") != std::string::npos);
    for (const auto& n : names) CHECK(msg.find(n) != std::string::npos);
  }
}

TEST_CASE("the source speaker's embedding is never read") {
  const Trained& t = TrainedToy();
  const auto& names = t.corpus.speakers.names();
  const Example& source = FindExample(names[2]);
  const ConversionRequest r = RequestFor(source, names[0]);
  Checkpoint ablated = t.checkpoint;
  ablated.params.Get("speaker/embedding").value.row(2).setZero();
  CHECK(Convert(r, ablated).mel.frames == Convert(r, t.checkpoint).mel.frames);
  // Ablating the target row does change the output.
  ablated.params.Get("speaker/embedding").value.row(0).setZero();
  CHECK(Convert(r, ablated).mel.frames != Convert(r, t.checkpoint).mel.frames);
}

TEST_CASE("different target speakers give different outputs") {
  const Trained& t = TrainedToy();
  const auto& names = t.corpus.speakers.names();
  const Example& source = FindExample(names[2]);
  ConversionRequest a = RequestFor(source, names[0], NuMode::kNone);
  ConversionRequest b = RequestFor(source, names[1], NuMode::kNone);
  const Matrix ma = Convert(a, t.checkpoint).mel.frames;
  const Matrix mb = Convert(b, t.checkpoint).mel.frames;
  CHECK((ma - mb).cwiseAbs().mean() > 1e-6);
}

TEST_CASE("a low-pitched target halves a 220 Hz source") {
  const Trained& t = TrainedToy();
  const auto& names = t.corpus.speakers.names();
  const Example& source = FindExample(names[1]);  // ~220 Hz speech
  const ConversionResult out = Convert(RequestFor(source, names[0]), t.checkpoint);
  CHECK(out.diagnostics.nu == doctest::Approx(0.5).epsilon(0.05));

  auto median = [](std::vector<double> v) {
    std::erase(v, 0.0);
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const auto& profile = t.checkpoint.f0_profiles.at(names[0]).means;
  const double target_mean =
      std::accumulate(profile.begin(), profile.end(), 0.0) / profile.size();
  const double contour = median(source.features.f0.values) /
                         out.diagnostics.source_mean_f0;
  CHECK(median(out.diagnostics.converted_f0) ==
        doctest::Approx(target_mean * contour).epsilon(0.05));
  CHECK(target_mean == doctest::Approx(110.0).epsilon(0.05));
}

}  // namespace
}  // namespace singvc
