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

#ifndef SINGVC_CORPUS_H_
#define SINGVC_CORPUS_H_

#include <map>
#include <string>
#include <vector>

#include "singvc/signal.h"

namespace singvc {

// Fixed non-tonal inventory: five vowels followed by five consonants.
class PhonemeInventory {
 public:
  PhonemeInventory();

  int size() const { return static_cast<int>(symbols_.size()); }
  // -1 when the symbol is unknown.
  int Id(const std::string& symbol) const;
  const std::string& Symbol(int id) const;
  bool IsVowel(int id) const;

  bool operator==(const PhonemeInventory&) const = default;

 private:
  std::vector<std::string> symbols_;
  std::vector<bool> vowel_;
};

enum class UtteranceKind { kSpeech, kSinging };

std::string KindName(UtteranceKind kind);
UtteranceKind ParseKind(const std::string& name);

struct Phoneme {
  std::string symbol;
  bool is_vowel = false;

  bool operator==(const Phoneme&) const = default;
};

struct Utterance {
  std::string id;
  std::string speaker_id;
  UtteranceKind kind = UtteranceKind::kSpeech;
  // As written in the manifest; relative paths resolve against Corpus::root.
  std::string audio_path;
  std::vector<Phoneme> phonemes;
  std::vector<int> durations;  // frames per phone
  // Generator ground truth per phone (Hz, 0 for unvoiced); empty when absent.
  std::vector<double> truth_f0;

  int NumFrames() const;
  std::vector<int> PhonemeIds(const PhonemeInventory& inventory) const;
  // Per-frame vowel flag following the durations.
  std::vector<bool> VowelFrames() const;

  bool operator==(const Utterance&) const = default;
};

struct FeatureRecord {
  std::string utterance_id;
  MelSpectrogram mel;
  F0Track f0;
  RmseTrack rmse;
  PositionTrack positions;

  long NumFrames() const { return mel.NumFrames(); }
};

// Speaker names to dense indices 0..S-1 in registration order.
class SpeakerRegistry {
 public:
  // Returns the existing index when already registered.
  int Register(const std::string& name);
  // Throws ValidationError listing the known speakers.
  int Index(const std::string& name) const;
  bool Contains(const std::string& name) const;
  const std::string& Name(int index) const { return names_.at(index); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const SpeakerRegistry&) const = default;

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

struct Corpus {
  std::vector<Utterance> utterances;
  SpeakerRegistry speakers;
  PhonemeInventory inventory;
  // Directory the manifest was loaded from.
  std::string root;

  std::string AudioPath(const Utterance& u) const;
  bool operator==(const Corpus& other) const {
    return utterances == other.utterances && speakers == other.speakers &&
           inventory == other.inventory;
  }
};

// JSON Lines manifest, one utterance per line:
//   {"utt_id", "speaker", "kind", "audio",
//    "phones": [{"sym", "vowel", "dur_frames", "f0"?}]}
Corpus LoadManifest(const std::string& path);
void SaveManifest(const Corpus& corpus, const std::string& path);
// Parses a single manifest line; `line_number` is only used in messages.
Utterance ParseManifestLine(const std::string& line, int line_number,
                            const PhonemeInventory& inventory);
std::string FormatManifestLine(const Utterance& u);

// Frame-count tolerance between summed durations and extracted features.
constexpr int kAlignmentTolerance = 2;

struct CheckedUtterance {
  Utterance utterance;
  FeatureRecord features;
};

// Reconciles durations with the feature frame count T: within tolerance the
// last phone absorbs the difference (tracks are padded with their last frame
// if that phone cannot shrink) and positions are recomputed; beyond it an
// AlignmentError is thrown.
CheckedUtterance ValidateUtterance(Utterance utterance,
                                   FeatureRecord features);

// Relative sampling weight per utterance kind; training draws utterances with
// probability proportional to the weight of their kind.
struct KindWeights {
  double speech = 1.0;
  double singing = 1.0;

  double For(UtteranceKind kind) const {
    return kind == UtteranceKind::kSpeech ? speech : singing;
  }
  bool operator==(const KindWeights&) const = default;
};

// ---------------------------------------------------------------------------
// Feature extraction and caching.

struct FeatureOptions {
  FrameConfig frame;
  F0Config f0;
  // Empty disables caching.
  std::string cache_dir;
};

struct FeaturizeStats {
  int extracted = 0;
  int loaded = 0;
};

// One reconciled utterance with its features and speaker index.
struct Example {
  Utterance utterance;
  FeatureRecord features;
  int speaker = 0;
};

constexpr int kFeatureCacheVersion = 1;

// Extracts mel/F0/RMSE for one clip and builds the position track.
FeatureRecord ExtractFeatures(const Utterance& utterance, const AudioClip& clip,
                              const FeatureOptions& options);

// Featurizes every utterance, reusing cache entries whose metadata matches the
// options and durations. Features are rounded to float32 precision so a cache
// hit reproduces a fresh extraction bit for bit.
std::vector<Example> FeaturizeCorpus(const Corpus& corpus,
                                     const FeatureOptions& options,
                                     FeaturizeStats* stats = nullptr);

// Reads the tracks of one cached utterance from its `<id>.meta.json` sidecar.
// Throws IoError when the sidecar or a track file is missing or malformed.
FeatureRecord LoadCachedFeatures(const std::string& meta_path);

// ---------------------------------------------------------------------------
// Synthetic corpus.

struct ToySpeakerSpec {
  std::string id;
  double base_hz = 120.0;
  // Multiplies every formant frequency; the speaker's timbre.
  double formant_scale = 1.0;
  std::vector<UtteranceKind> kinds = {UtteranceKind::kSpeech};
};

struct ToyCorpusSpec {
  std::vector<ToySpeakerSpec> speakers;
  int utterances_per_speaker = 10;
  int sample_rate = 24000;
  int hop = 300;
  uint64_t seed = 7;
};

// Deterministic speaker table cycling through four profiles: a low (110 Hz)
// and a high (220 Hz) speech-only voice, a singing-only voice, and one voice
// with both kinds.
std::vector<ToySpeakerSpec> DefaultToySpeakers(int count);

struct ToyUtterance {
  Utterance utterance;
  AudioClip audio;
};

// Synthesizes one utterance. Vowels are formant-shaped harmonic sources at the
// phone's pitch; consonants are resonator-filtered noise.
ToyUtterance SynthesizeToyUtterance(const ToySpeakerSpec& speaker,
                                    UtteranceKind kind, const std::string& id,
                                    const ToyCorpusSpec& spec, Rng* rng);

// Writes `<out_dir>/wavs/*.wav` and `<out_dir>/manifest.jsonl`; a pure
// function of (spec, seed).
Corpus GenerateToyCorpus(const ToyCorpusSpec& spec, const std::string& out_dir);

}  // namespace singvc

#endif  // SINGVC_CORPUS_H_
