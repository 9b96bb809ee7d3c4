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
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "singvc/corpus.h"
#include "singvc/wav.h"

namespace singvc {
namespace {

namespace fs = std::filesystem;

fs::path TempDir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("singvc_corpus_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string ReadBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void WriteText(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

Utterance MakeUtterance(const std::vector<int>& durations) {
  Utterance u;
  u.id = "u";
  u.speaker_id = "s";
  for (size_t i = 0; i < durations.size(); ++i) {
    u.phonemes.push_back({i % 2 ? "t" : "a", i % 2 == 0});
  }
  u.durations = durations;
  return u;
}

FeatureRecord MakeFeatures(long frames) {
  FeatureRecord f;
  f.mel.frames = Matrix::Constant(frames, 4, 0.5);
  for (long i = 0; i < frames; ++i) f.mel.frames(i, 0) = i;
  f.f0.values.assign(frames, 100.0);
  f.rmse.values.assign(frames, 0.1);
  return f;
}

ToyCorpusSpec SmallSpec() {
  ToyCorpusSpec spec;
  spec.speakers = DefaultToySpeakers(2);
  spec.utterances_per_speaker = 3;
  spec.seed = 11;
  return spec;
}

TEST_CASE("inventory has five vowels and five consonants") {
  PhonemeInventory inv;
  CHECK(inv.size() == 10);
  int vowels = 0;
  for (int i = 0; i < inv.size(); ++i) vowels += inv.IsVowel(i);
  CHECK(vowels == 5);
  CHECK(inv.Id("zz") == -1);
  CHECK(inv.Symbol(inv.Id("s")) == "s");
}

TEST_CASE("empty manifest gives an empty corpus") {
  fs::path dir = TempDir("empty");
  WriteText(dir / "m.jsonl", "");
  Corpus c = LoadManifest((dir / "m.jsonl").string());
  CHECK(c.utterances.empty());
  CHECK(c.speakers.size() == 0);
}

TEST_CASE("two utterances by one speaker register one speaker at index 0") {
  fs::path dir = TempDir("one_speaker");
  const std::string phones =
      R"("phones":[{"sym":"a","vowel":true,"dur_frames":3}])";
  WriteText(dir / "m.jsonl",
            R"({"utt_id":"x","speaker":"amy","kind":"speech","audio":"x.wav",)" +
                phones + "}\n" +
                R"({"utt_id":"y","speaker":"amy","kind":"singing","audio":"y.wav",)" +
                phones + "}\n");
  Corpus c = LoadManifest((dir / "m.jsonl").string());
  CHECK(c.utterances.size() == 2);
  CHECK(c.speakers.size() == 1);
  CHECK(c.speakers.Index("amy") == 0);
  CHECK(c.utterances[1].kind == UtteranceKind::kSinging);
}

TEST_CASE("unknown symbol error names the symbol and the line") {
  fs::path dir = TempDir("bad_symbol");
  WriteText(dir / "m.jsonl",
            R"({"utt_id":"x","speaker":"s","kind":"speech","audio":"x.wav","phones":[{"sym":"a","vowel":true,"dur_frames":3}]})"
            "\n"
            R"({"utt_id":"y","speaker":"s","kind":"speech","audio":"y.wav","phones":[{"sym":"zh","vowel":false,"dur_frames":3}]})"
            "\n");
  try {
    LoadManifest((dir / "m.jsonl").string());
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'zh'") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
}

TEST_CASE("duplicate ids and bad durations are rejected") {
  fs::path dir = TempDir("dupes");
  const std::string line =
      R"({"utt_id":"x","speaker":"s","kind":"speech","audio":"x.wav","phones":[{"sym":"a","vowel":true,"dur_frames":3}]})";
  WriteText(dir / "dup.jsonl", line + "\n" + line + "\n");
  CHECK_THROWS_WITH_AS(LoadManifest((dir / "dup.jsonl").string()),
                       doctest::Contains("duplicate"), ValidationError);
  WriteText(dir / "zero.jsonl",
            R"({"utt_id":"x","speaker":"s","kind":"speech","audio":"x.wav","phones":[{"sym":"a","vowel":true,"dur_frames":0}]})");
  CHECK_THROWS_AS(LoadManifest((dir / "zero.jsonl").string()),
                  ValidationError);
  CHECK_THROWS_AS(LoadManifest((dir / "missing.jsonl").string()), IoError);
}

TEST_CASE("reconciliation within tolerance and alignment errors beyond it") {
  SUBCASE("equal lengths are unchanged") {
    auto c = ValidateUtterance(MakeUtterance({40, 30, 30}), MakeFeatures(100));
    CHECK(c.utterance.durations == std::vector<int>{40, 30, 30});
    CHECK(c.features.positions.values.size() == 100);
  }
  SUBCASE("one extra frame extends the last phone") {
    auto c = ValidateUtterance(MakeUtterance({40, 30, 30}), MakeFeatures(101));
    CHECK(c.utterance.durations == std::vector<int>{40, 30, 31});
    CHECK(c.features.NumFrames() == 101);
  }
  SUBCASE("ten extra frames is an alignment error") {
    CHECK_THROWS_AS(
        ValidateUtterance(MakeUtterance({40, 30, 30}), MakeFeatures(110)),
        AlignmentError);
  }
  SUBCASE("a last phone too short to shrink pads the tracks instead") {
    auto c = ValidateUtterance(MakeUtterance({10, 1}), MakeFeatures(9));
    CHECK(c.utterance.durations == std::vector<int>{10, 1});
    CHECK(c.features.NumFrames() == 11);
    CHECK(c.features.mel.frames(10, 0) == 8.0);
    CHECK(c.features.f0.values.size() == 11);
  }
}

TEST_CASE("reconciled tracks always agree with durations") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> d(1 + rng.Below(6));
    for (int& x : d) x = 1 + static_cast<int>(rng.Below(8));
    Utterance u = MakeUtterance(d);
    const long t = std::max<long>(1, u.NumFrames() + static_cast<long>(rng.Below(5)) - 2);
    auto c = ValidateUtterance(u, MakeFeatures(t));
    const long sum = c.utterance.NumFrames();
    CHECK(c.features.NumFrames() == sum);
    CHECK(static_cast<long>(c.features.f0.values.size()) == sum);
    CHECK(static_cast<long>(c.features.rmse.values.size()) == sum);
    CHECK(static_cast<long>(c.features.positions.values.size()) == sum);
    CHECK(*std::min_element(c.utterance.durations.begin(),
                            c.utterance.durations.end()) >= 1);
  }
}

TEST_CASE("toy corpus has the requested size and is deterministic") {
  ToyCorpusSpec spec = SmallSpec();
  spec.utterances_per_speaker = 10;
  fs::path a = TempDir("toy_a"), b = TempDir("toy_b");
  Corpus ca = GenerateToyCorpus(spec, a.string());
  Corpus cb = GenerateToyCorpus(spec, b.string());
  CHECK(ca.utterances.size() == 20);
  CHECK(ca.speakers.size() == 2);
  CHECK(ReadBytes(a / "manifest.jsonl") == ReadBytes(b / "manifest.jsonl"));
  for (const Utterance& u : ca.utterances) {
    CHECK(ReadBytes(a / u.audio_path) == ReadBytes(b / u.audio_path));
  }
  spec.seed += 1;
  fs::path c = TempDir("toy_c");
  GenerateToyCorpus(spec, c.string());
  CHECK(ReadBytes(a / "manifest.jsonl") != ReadBytes(c / "manifest.jsonl"));
}

TEST_CASE("manifest save then load reproduces the corpus") {
  fs::path dir = TempDir("roundtrip");
  Corpus c = GenerateToyCorpus(SmallSpec(), dir.string());
  Corpus loaded = LoadManifest((dir / "manifest.jsonl").string());
  CHECK(loaded == c);
  SaveManifest(loaded, (dir / "again.jsonl").string());
  CHECK(ReadBytes(dir / "again.jsonl") == ReadBytes(dir / "manifest.jsonl"));
  CHECK(LoadManifest((dir / "again.jsonl").string()) == c);
}

TEST_CASE("toy singing vowels carry the generating note") {
  ToySpeakerSpec singer = DefaultToySpeakers(3)[2];
  ToyCorpusSpec spec;
  FrameConfig frame;
  int checked = 0;
  for (uint64_t seed = 1; seed <= 4; ++seed) {
    Rng rng(seed);
    ToyUtterance t = SynthesizeToyUtterance(singer, UtteranceKind::kSinging,
                                            "song", spec, &rng);
    const F0Track f0 = EstimateF0(t.audio, frame);
    long start = 0;
    const Utterance& u = t.utterance;
    for (size_t i = 0; i < u.phonemes.size(); ++i) {
      if (u.phonemes[i].is_vowel) {
        // Interior frames only: the analysis window straddles phone edges.
        std::vector<double> inner;
        for (long f = start + 3; f < start + u.durations[i] - 3; ++f) {
          inner.push_back(f0.values[f]);
        }
        std::sort(inner.begin(), inner.end());
        const double median = inner[inner.size() / 2];
        CHECK(std::abs(median / u.truth_f0[i] - 1.0) < 0.02);
        for (double v : inner) CHECK(std::abs(v / u.truth_f0[i] - 1.0) < 0.02);
        ++checked;
      }
      start += u.durations[i];
    }
  }
  CHECK(checked >= 16);
}

TEST_CASE("toy speech pitch stays within the jitter band") {
  ToySpeakerSpec low = DefaultToySpeakers(1)[0];
  ToyCorpusSpec spec;
  Rng rng(3);
  ToyUtterance t =
      SynthesizeToyUtterance(low, UtteranceKind::kSpeech, "talk", spec, &rng);
  for (size_t i = 0; i < t.utterance.phonemes.size(); ++i) {
    if (t.utterance.phonemes[i].is_vowel) {
      CHECK(std::abs(t.utterance.truth_f0[i] / low.base_hz - 1.0) <= 0.03);
    } else {
      CHECK(t.utterance.truth_f0[i] == 0.0);
    }
  }
  CHECK(static_cast<long>(t.audio.samples.size()) ==
        t.utterance.NumFrames() * spec.hop);
}

TEST_CASE("feature cache reuse, partial invalidation and versioning") {
  fs::path dir = TempDir("cache");
  Corpus corpus = GenerateToyCorpus(SmallSpec(), (dir / "corpus").string());
  corpus = LoadManifest((dir / "corpus" / "manifest.jsonl").string());
  FeatureOptions opts;
  opts.cache_dir = (dir / "cache").string();

  FeaturizeStats cold;
  auto first = FeaturizeCorpus(corpus, opts, &cold);
  CHECK(cold.extracted == 6);
  CHECK(cold.loaded == 0);

  FeaturizeStats warm;
  auto second = FeaturizeCorpus(corpus, opts, &warm);
  CHECK(warm.extracted == 0);
  CHECK(warm.loaded == 6);
  REQUIRE(first.size() == second.size());
  for (size_t i = 0; i < first.size(); ++i) {
    const FeatureRecord& a = first[i].features;
    const FeatureRecord& b = second[i].features;
    CHECK(a.mel.frames == b.mel.frames);
    CHECK(a.f0.values == b.f0.values);
    CHECK(a.rmse.values == b.rmse.values);
    CHECK(a.positions.values == b.positions.values);
    CHECK(first[i].utterance == second[i].utterance);
    const long t = a.NumFrames();
    CHECK(t == first[i].utterance.NumFrames());
    CHECK(static_cast<long>(a.positions.values.size()) == t);
  }

  fs::remove(fs::path(opts.cache_dir) / (corpus.utterances[1].id + ".f0.f32"));
  FeaturizeStats partial;
  FeaturizeCorpus(corpus, opts, &partial);
  CHECK(partial.extracted == 1);
  CHECK(partial.loaded == 5);

  FeatureOptions changed = opts;
  changed.frame.mel_bins = 40;
  FeaturizeStats full;
  FeaturizeCorpus(corpus, changed, &full);
  CHECK(full.extracted == 6);
  CHECK(full.loaded == 0);

  // Leftover temp files would mean a non-atomic write path.
  for (const auto& entry : fs::directory_iterator(opts.cache_dir)) {
    CHECK(entry.path().extension() != ".tmp");
  }
}

TEST_CASE("unreadable audio is an io error") {
  fs::path dir = TempDir("noaudio");
  Corpus c = GenerateToyCorpus(SmallSpec(), dir.string());
  fs::remove(dir / c.utterances[0].audio_path);
  CHECK_THROWS_AS(FeaturizeCorpus(c, FeatureOptions{}), IoError);
}

}  // namespace
}  // namespace singvc
