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

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "singvc/corpus.h"
#include "singvc/wav.h"

namespace singvc {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Formants {
  double freq[3];
};

// Classic adult formant targets (Hz) for a, e, i, o, u.
const Formants kVowelFormants[5] = {{{730, 1090, 2440}},
                                    {{530, 1840, 2480}},
                                    {{270, 2290, 3010}},
                                    {{570, 840, 2410}},
                                    {{300, 870, 2240}}};
constexpr double kFormantBandwidth[3] = {90, 110, 170};
constexpr double kFormantGain[3] = {1.0, 0.55, 0.3};

struct Fricative {
  double center;
  double bandwidth;
};

// p t k s f
const Fricative kConsonantShape[5] = {
    {800, 1200}, {3500, 2000}, {2200, 1500}, {6500, 3000}, {4500, 4000}};

// Semitone offsets of the major pentatonic scale over an octave and a bit.
constexpr int kPentatonic[] = {0, 2, 4, 7, 9, 12};

constexpr double kVowelRms = 0.12;
constexpr double kConsonantRms = 0.03;
// Raised-cosine fade at phone edges, in seconds.
constexpr double kFade = 0.005;

double Envelope(const Formants& f, double scale, double hz) {
  double g = 0.01;
  for (int k = 0; k < 3; ++k) {
    const double x = (hz - scale * f.freq[k]) / (0.5 * kFormantBandwidth[k]);
    g += kFormantGain[k] / (1.0 + x * x);
  }
  return g;
}

void ApplyFade(double* x, long n, int sample_rate) {
  const long fade = std::min<long>(n / 2, std::lround(kFade * sample_rate));
  for (long i = 0; i < fade; ++i) {
    const double w = 0.5 - 0.5 * std::cos(kPi * (i + 0.5) / fade);
    x[i] *= w;
    x[n - 1 - i] *= w;
  }
}

// Band-limited pulse train at f0 whose harmonic amplitudes follow the vowel
// envelope. `phase` carries over so consecutive vowels join smoothly.
void RenderVowel(int vowel, double f0, double formant_scale, int sample_rate,
                 double* out, long n, double* phase) {
  const int harmonics = static_cast<int>(0.45 * sample_rate / f0);
  std::vector<double> amp(harmonics + 1, 0.0);
  double power = 0.0;
  for (int h = 1; h <= harmonics; ++h) {
    amp[h] = Envelope(kVowelFormants[vowel], formant_scale, h * f0);
    power += 0.5 * amp[h] * amp[h];
  }
  const double norm = kVowelRms / std::sqrt(power);
  const double step = 2.0 * kPi * f0 / sample_rate;
  for (long i = 0; i < n; ++i) {
    const double phi = *phase;
    // sin(h phi) by the Chebyshev recurrence.
    const double c2 = 2.0 * std::cos(phi);
    double prev = 0.0, cur = std::sin(phi), acc = 0.0;
    for (int h = 1; h <= harmonics; ++h) {
      acc += amp[h] * cur;
      const double next = c2 * cur - prev;
      prev = cur;
      cur = next;
    }
    out[i] = norm * acc;
    *phase = std::fmod(phi + step, 2.0 * kPi);
  }
}

void RenderConsonant(int consonant, int sample_rate, Rng* rng, double* out,
                     long n) {
  const Fricative& c = kConsonantShape[consonant];
  const double theta = 2.0 * kPi * c.center / sample_rate;
  const double r = std::exp(-kPi * c.bandwidth / sample_rate);
  const double a1 = 2.0 * r * std::cos(theta), a2 = -r * r;
  double y1 = 0.0, y2 = 0.0, power = 0.0;
  for (long i = 0; i < n; ++i) {
    const double y = rng->Normal() + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    out[i] = y;
    power += y * y;
  }
  const double norm = kConsonantRms / std::sqrt(power / n + 1e-30);
  for (long i = 0; i < n; ++i) out[i] *= norm;
}

int UniformInt(Rng* rng, int lo, int hi) {
  return lo + static_cast<int>(rng->Below(static_cast<uint64_t>(hi - lo + 1)));
}

}  // namespace

std::vector<ToySpeakerSpec> DefaultToySpeakers(int count) {
  static const double kBase[4] = {110.0, 220.0, 196.0, 150.0};
  static const double kScale[4] = {0.92, 1.12, 1.05, 0.98};
  std::vector<ToySpeakerSpec> out;
  for (int i = 0; i < count; ++i) {
    ToySpeakerSpec s;
    s.id = "spk" + std::to_string(i);
    const int slot = i % 4;
    const double drift = 1.0 + 0.04 * (i / 4);
    s.base_hz = kBase[slot] * drift;
    s.formant_scale = kScale[slot] * (1.0 + 0.02 * (i / 4));
    switch (slot) {
      case 2:
        s.kinds = {UtteranceKind::kSinging};
        break;
      case 3:
        s.kinds = {UtteranceKind::kSpeech, UtteranceKind::kSinging};
        break;
      default:
        s.kinds = {UtteranceKind::kSpeech};
    }
    out.push_back(s);
  }
  return out;
}

ToyUtterance SynthesizeToyUtterance(const ToySpeakerSpec& speaker,
                                    UtteranceKind kind, const std::string& id,
                                    const ToyCorpusSpec& spec, Rng* rng) {
  const PhonemeInventory inventory;
  const bool singing = kind == UtteranceKind::kSinging;
  Utterance u;
  u.id = id;
  u.speaker_id = speaker.id;
  u.kind = kind;
  u.audio_path = "wavs/" + id + ".wav";

  // Alternating consonant/vowel syllables; speech may open on a vowel.
  const int syllables = singing ? UniformInt(rng, 4, 6) : UniformInt(rng, 4, 5);
  const bool vowel_first = !singing && rng->Uniform() < 0.5;
  for (int s = 0; s < syllables; ++s) {
    for (int part = 0; part < 2; ++part) {
      const bool vowel = (part == 0) == vowel_first;
      const int id_in_class = UniformInt(rng, 0, 4);
      const int pid = vowel ? id_in_class : 5 + id_in_class;
      u.phonemes.push_back({inventory.Symbol(pid), vowel});
      int dur;
      double f0 = 0.0;
      if (vowel && singing) {
        dur = UniformInt(rng, 14, 24);
        const int semis = kPentatonic[UniformInt(rng, 0, 5)];
        f0 = speaker.base_hz * std::pow(2.0, semis / 12.0);
      } else if (vowel) {
        dur = UniformInt(rng, 6, 12);
        f0 = speaker.base_hz * rng->Uniform(0.97, 1.03);
      } else {
        dur = singing ? UniformInt(rng, 3, 5) : UniformInt(rng, 3, 6);
      }
      u.durations.push_back(dur);
      u.truth_f0.push_back(f0);
    }
  }

  ToyUtterance out;
  out.audio.sample_rate = spec.sample_rate;
  out.audio.samples.assign(static_cast<size_t>(u.NumFrames()) * spec.hop, 0.0);
  double phase = 0.0;
  long cursor = 0;
  for (size_t i = 0; i < u.phonemes.size(); ++i) {
    const long n = static_cast<long>(u.durations[i]) * spec.hop;
    double* seg = out.audio.samples.data() + cursor;
    const int pid = inventory.Id(u.phonemes[i].symbol);
    if (u.phonemes[i].is_vowel) {
      RenderVowel(pid, u.truth_f0[i], speaker.formant_scale, spec.sample_rate,
                  seg, n, &phase);
    } else {
      RenderConsonant(pid - 5, spec.sample_rate, rng, seg, n);
    }
    ApplyFade(seg, n, spec.sample_rate);
    cursor += n;
  }
  out.utterance = std::move(u);
  return out;
}

Corpus GenerateToyCorpus(const ToyCorpusSpec& spec,
                         const std::string& out_dir) {
  if (spec.speakers.size() < 2) {
    throw ConfigError("toy corpus needs at least 2 speakers");
  }
  if (spec.utterances_per_speaker < 1) {
    throw ConfigError("toy corpus needs at least 1 utterance per speaker");
  }
  for (const auto& s : spec.speakers) {
    if (s.kinds.empty() || !(s.base_hz > 0.0) || !(s.formant_scale > 0.0)) {
      throw ConfigError("toy speaker '" + s.id +
                        "' needs a kind, base pitch and formant scale");
    }
  }
  const fs::path root(out_dir);
  std::error_code ec;
  fs::create_directories(root / "wavs", ec);
  if (ec) throw IoError("cannot create " + (root / "wavs").string());

  Corpus corpus;
  corpus.root = root.string();
  for (size_t si = 0; si < spec.speakers.size(); ++si) {
    const ToySpeakerSpec& speaker = spec.speakers[si];
    corpus.speakers.Register(speaker.id);
    for (int j = 0; j < spec.utterances_per_speaker; ++j) {
      const UtteranceKind kind = speaker.kinds[j % speaker.kinds.size()];
      char id[128];
      std::snprintf(id, sizeof(id), "%s_%s_%02d", speaker.id.c_str(),
                    KindName(kind).c_str(), j);
      // One stream per utterance so each is reproducible in isolation.
      Rng rng(spec.seed * 1000003ULL + si * 1009ULL + j);
      ToyUtterance t = SynthesizeToyUtterance(speaker, kind, id, spec, &rng);
      WriteWav((root / t.utterance.audio_path).string(), t.audio);
      corpus.utterances.push_back(std::move(t.utterance));
    }
  }
  SaveManifest(corpus, (root / "manifest.jsonl").string());
  return corpus;
}

}  // namespace singvc
