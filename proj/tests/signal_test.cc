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
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "singvc/signal.h"
#include "singvc/wav.h"

namespace singvc {
namespace {

AudioClip Sine(double hz, double seconds, double amplitude = 0.5,
               int rate = 24000) {
  AudioClip clip;
  clip.sample_rate = rate;
  const long n = std::lround(seconds * rate);
  for (long i = 0; i < n; ++i) {
    clip.samples.push_back(amplitude *
                           std::sin(2.0 * std::numbers::pi * hz * i / rate));
  }
  return clip;
}

// Frames whose whole window lies inside the clip.
std::vector<long> InteriorFrames(long num_samples, const FrameConfig& cfg) {
  std::vector<long> out;
  for (long i = 0; i < FrameCount(num_samples, cfg.hop); ++i) {
    const long start = cfg.FrameStart(i);
    if (start >= 0 && start + cfg.window <= num_samples) out.push_back(i);
  }
  return out;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

TEST_CASE("frame_signal counts frames by ceiling and zero pads") {
  FrameConfig cfg;
  AudioClip clip;
  clip.samples.assign(3000, 0.1);
  CHECK(FrameSignal(clip, cfg).rows() == 10);
  clip.samples.assign(2999, 0.1);
  CHECK(FrameSignal(clip, cfg).rows() == 10);
  clip.samples.assign(300, 0.25);
  const Matrix frames = FrameSignal(clip, cfg);
  REQUIRE(frames.rows() == 1);
  CHECK(frames.cols() == 1200);
  // Only the 300 real samples are non-zero.
  CHECK(frames.cwiseAbs().sum() == doctest::Approx(300 * 0.25));
  clip.samples.clear();
  CHECK_THROWS_WITH_AS(FrameSignal(clip, cfg), "empty audio", ValidationError);
}

TEST_CASE("frame config validation") {
  FrameConfig cfg;
  cfg.fmax = 12000.0;
  CHECK_NOTHROW(cfg.Validate());
  cfg.fmax = 12000.5;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = FrameConfig{};
  cfg.window = 200;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  cfg = FrameConfig{};
  cfg.fft_size = 1024;
  CHECK_THROWS_AS(cfg.Validate(), ConfigError);
  AudioClip clip = Sine(220, 0.1);
  cfg = FrameConfig{};
  cfg.fmax = 20000.0;
  CHECK_THROWS_AS(ComputeMelSpectrogram(clip, cfg), ConfigError);
}

TEST_CASE("mel filterbank rows are positive and columns sum to at most one") {
  FrameConfig cfg;
  const Matrix bank = MelFilterbank(cfg);
  CHECK(bank.rows() == 80);
  CHECK(bank.cols() == 1025);
  CHECK(bank.minCoeff() >= 0.0);
  for (long m = 0; m < bank.rows(); ++m) CHECK(bank.row(m).sum() > 0.0);
  for (long b = 0; b < bank.cols(); ++b) {
    CHECK(bank.col(b).sum() <= 1.0 + 1e-6);
  }
}

TEST_CASE("mel of silence is the log floor everywhere") {
  FrameConfig cfg;
  AudioClip clip;
  clip.samples.assign(24000, 0.0);
  const MelSpectrogram mel = ComputeMelSpectrogram(clip, cfg);
  CHECK(mel.frames.rows() == 80);
  CHECK(mel.frames.cols() == 80);
  CHECK((mel.frames.array() == std::log(cfg.log_floor)).all());
}

TEST_CASE("mel argmax of a 440 Hz tone is the filter centred nearest 440 Hz") {
  FrameConfig cfg;
  const MelSpectrogram mel = ComputeMelSpectrogram(Sine(440, 1.0), cfg);
  const RowVector mean = mel.frames.colwise().mean();
  Eigen::Index argmax;
  mean.maxCoeff(&argmax);

  // Independent centre computation straight from the HTK mel formula.
  const double lo = 2595.0 * std::log10(1.0 + 40.0 / 700.0);
  const double hi = 2595.0 * std::log10(1.0 + 12000.0 / 700.0);
  int nearest = -1;
  double best = 1e9;
  for (int k = 0; k < 80; ++k) {
    const double m = lo + (hi - lo) * (k + 1) / 81.0;
    const double hz = 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
    if (std::abs(hz - 440.0) < best) {
      best = std::abs(hz - 440.0);
      nearest = k;
    }
  }
  CHECK(argmax == nearest);
}

TEST_CASE("doubling amplitude adds log(2) to unclamped mel entries") {
  FrameConfig cfg;
  Rng rng(11);
  AudioClip clip;
  for (int i = 0; i < 12000; ++i) clip.samples.push_back(rng.Uniform(-0.4, 0.4));
  AudioClip doubled = clip;
  for (double& s : doubled.samples) s *= 2.0;
  const Matrix a = ComputeMelSpectrogram(clip, cfg).frames;
  const Matrix b = ComputeMelSpectrogram(doubled, cfg).frames;
  const double floor = std::log(cfg.log_floor);
  int checked = 0;
  for (long i = 0; i < a.rows(); ++i) {
    for (long j = 0; j < a.cols(); ++j) {
      if (a(i, j) <= floor + 1e-9) continue;
      CHECK(std::abs(b(i, j) - a(i, j) - std::log(2.0)) < 1e-6);
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("estimate_f0 on silence is fully unvoiced") {
  AudioClip clip;
  clip.samples.assign(24000, 0.0);
  const F0Track f0 = EstimateF0(clip, FrameConfig{});
  CHECK(f0.values.size() == 80);
  for (double v : f0.values) CHECK(v == 0.0);
}

TEST_CASE("estimate_f0 recovers a 220 Hz tone") {
  FrameConfig cfg;
  const AudioClip clip = Sine(220, 1.0);
  const F0Track f0 = EstimateF0(clip, cfg);
  const auto interior = InteriorFrames(clip.samples.size(), cfg);
  int good = 0;
  for (long i : interior) {
    if (f0.values[i] > 0.0 && std::abs(f0.values[i] - 220.0) <= 2.2) ++good;
  }
  CHECK(good >= 0.95 * interior.size());
}

TEST_CASE("estimate_f0 tracks a 220 Hz to 330 Hz step") {
  FrameConfig cfg;
  AudioClip clip = Sine(220, 0.5);
  const AudioClip second = Sine(330, 0.5);
  clip.samples.insert(clip.samples.end(), second.samples.begin(),
                      second.samples.end());
  const F0Track f0 = EstimateF0(clip, cfg);
  // Segment interiors, away from the switch at frame 40.
  std::vector<double> low(f0.values.begin() + 3, f0.values.begin() + 37);
  std::vector<double> high(f0.values.begin() + 43, f0.values.begin() + 77);
  CHECK(std::abs(Median(low) - 220.0) <= 2.2);
  CHECK(std::abs(Median(high) - 330.0) <= 3.3);
}

TEST_CASE("estimate_f0 is amplitude invariant") {
  FrameConfig cfg;
  const F0Track ref = EstimateF0(Sine(180, 0.6, 1.0), cfg);
  for (double c : {0.1, 0.37, 0.8}) {
    const F0Track scaled = EstimateF0(Sine(180, 0.6, c), cfg);
    REQUIRE(scaled.values.size() == ref.values.size());
    for (size_t i = 0; i < ref.values.size(); ++i) {
      CHECK((scaled.values[i] > 0.0) == (ref.values[i] > 0.0));
      if (ref.values[i] > 0.0) {
        CHECK(std::abs(scaled.values[i] / ref.values[i] - 1.0) <= 0.005);
      }
    }
  }
}

TEST_CASE("median filter keeps the voicing pattern") {
  FrameConfig cfg;
  F0Config f0cfg;
  f0cfg.median_filter = true;
  AudioClip clip = Sine(200, 0.4);
  clip.samples.resize(clip.samples.size() + 6000, 0.0);
  const F0Track raw = EstimateF0(clip, cfg);
  const F0Track smooth = EstimateF0(clip, cfg, f0cfg);
  for (size_t i = 0; i < raw.values.size(); ++i) {
    CHECK((raw.values[i] == 0.0) == (smooth.values[i] == 0.0));
  }
}

TEST_CASE("compute_rmse examples") {
  FrameConfig cfg;
  AudioClip zeros;
  zeros.samples.assign(3000, 0.0);
  for (double v : ComputeRmse(zeros, cfg).values) CHECK(v == 0.0);

  AudioClip constant;
  constant.samples.assign(6000, 0.5);
  const RmseTrack rc = ComputeRmse(constant, cfg);
  for (long i : InteriorFrames(6000, cfg)) {
    CHECK(rc.values[i] == doctest::Approx(0.5).epsilon(1e-12));
  }

  // 200 Hz at 24 kHz: 120-sample period, 10 periods per 1200-sample window.
  const AudioClip sine = Sine(200, 0.5, 1.0);
  const RmseTrack rs = ComputeRmse(sine, cfg);
  const auto interior = InteriorFrames(sine.samples.size(), cfg);
  REQUIRE(!interior.empty());
  for (long i : interior) {
    // Direct numerical RMS over the same window.
    double acc = 0.0;
    for (int j = 0; j < cfg.window; ++j) {
      const double s = sine.samples[cfg.FrameStart(i) + j];
      acc += s * s;
    }
    CHECK(std::abs(rs.values[i] - std::sqrt(acc / cfg.window)) < 1e-12);
    CHECK(std::abs(rs.values[i] - 0.70711) < 1e-4);
  }
}

TEST_CASE("rmse is linear in amplitude") {
  FrameConfig cfg;
  Rng rng(3);
  AudioClip clip;
  for (int i = 0; i < 5000; ++i) clip.samples.push_back(rng.Uniform(-0.3, 0.3));
  const RmseTrack base = ComputeRmse(clip, cfg);
  for (double c : {0.25, 1.7, 3.0}) {
    AudioClip scaled = clip;
    for (double& s : scaled.samples) s *= c;
    const RmseTrack r = ComputeRmse(scaled, cfg);
    for (size_t i = 0; i < base.values.size(); ++i) {
      CHECK(std::abs(r.values[i] - c * base.values[i]) <=
            1e-9 * c * base.values[i]);
    }
  }
}

TEST_CASE("position_codes examples and errors") {
  CHECK(PositionCodes({2}).values == std::vector<double>{0.5, 1.0});
  const auto p = PositionCodes({1, 3}).values;
  REQUIRE(p.size() == 4);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == doctest::Approx(1.0 / 3.0));
  CHECK(p[2] == doctest::Approx(2.0 / 3.0));
  CHECK(p[3] == 1.0);
  CHECK(PositionCodes({1}).values == std::vector<double>{1.0});
  CHECK_THROWS_AS(PositionCodes({2, 0}), ValidationError);
  CHECK_THROWS_AS(PositionCodes({-1}), ValidationError);
}

TEST_CASE("position_codes concatenate across phones") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int a = 1 + static_cast<int>(rng.Below(9));
    const int b = 1 + static_cast<int>(rng.Below(9));
    auto left = PositionCodes({a}).values;
    const auto right = PositionCodes({b}).values;
    left.insert(left.end(), right.begin(), right.end());
    const auto both = PositionCodes({a, b}).values;
    CHECK(both == left);
    CHECK(both.size() == static_cast<size_t>(a + b));
    for (int j = 1; j < a; ++j) CHECK(both[j] > both[j - 1]);
    CHECK(both[a - 1] == 1.0);
    CHECK(both.back() == 1.0);
  }
}

TEST_CASE("f0_conditioning encodes log2 ratio and voicing") {
  F0Track f0{{220.0, 440.0, 0.0, 110.0}};
  const Matrix c = F0Conditioning(f0, 220.0);
  CHECK(c(0, 0) == 0.0);
  CHECK(c(0, 1) == 1.0);
  CHECK(c(1, 0) == doctest::Approx(1.0));
  CHECK(c(1, 1) == 1.0);
  CHECK(c(2, 0) == 0.0);
  CHECK(c(2, 1) == 0.0);
  CHECK(c(3, 0) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(F0Conditioning(f0, 0.0), ValidationError);
}

TEST_CASE("all track producers agree on frame count") {
  FrameConfig cfg;
  for (long n : {299L, 300L, 301L, 7777L, 24000L}) {
    AudioClip clip = Sine(150, static_cast<double>(n) / 24000.0);
    clip.samples.resize(n, 0.0);
    const long t = FrameCount(n, cfg.hop);
    CHECK(ComputeMelSpectrogram(clip, cfg).NumFrames() == t);
    CHECK(static_cast<long>(EstimateF0(clip, cfg).values.size()) == t);
    CHECK(static_cast<long>(ComputeRmse(clip, cfg).values.size()) == t);
  }
}

TEST_CASE("stft and istft reconstruct a signal") {
  FrameConfig cfg;
  Rng rng(9);
  std::vector<double> x(9000);
  for (double& s : x) s = rng.Uniform(-0.5, 0.5);
  const auto y = Istft(Stft(x, cfg), cfg, static_cast<long>(x.size()));
  double err = 0.0;
  for (size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - y[i]));
  CHECK(err < 1e-10);
}

TEST_CASE("wav round trip and format checks") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "singvc_wav_test";
  fs::create_directories(dir);
  AudioClip clip;
  for (int i = -5; i < 5; ++i) clip.samples.push_back(i / 8.0);
  clip.samples.push_back(1.0);
  const std::string path = (dir / "a.wav").string();
  WriteWav(path, clip);
  const AudioClip back = ReadWav(path, 24000);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i + 1 < clip.samples.size(); ++i) {
    CHECK(back.samples[i] == clip.samples[i]);
  }
  CHECK(back.samples.back() == doctest::Approx(32767.0 / 32768.0));
  CHECK_THROWS_AS(ReadWav(path, 16000), IoError);
  CHECK_THROWS_AS(ReadWav((dir / "missing.wav").string()), IoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace singvc
