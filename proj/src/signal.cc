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

#include "singvc/signal.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace singvc {

namespace {

using FFT = Eigen::FFT<double>;

FFT MakeHalfSpectrumFft() {
  FFT fft;
  fft.SetFlag(FFT::HalfSpectrum);
  return fft;
}

}  // namespace

void AudioClip::Validate() const {
  if (sample_rate <= 0) throw ValidationError("sample rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw ValidationError("non-finite audio sample");
  }
}

void FrameConfig::Validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (hop <= 0) throw ConfigError("hop must be positive");
  if (window < hop) throw ConfigError("window must be >= hop");
  if (fft_size < window) throw ConfigError("fft_size must be >= window");
  if (mel_bins <= 0) throw ConfigError("mel_bins must be positive");
  if (!(fmin >= 0.0 && fmin < fmax)) throw ConfigError("need 0 <= fmin < fmax");
  if (fmax > sample_rate / 2.0) {
    throw ConfigError("fmax " + std::to_string(fmax) + " exceeds Nyquist " +
                      std::to_string(sample_rate / 2.0));
  }
  if (!(log_floor > 0.0)) throw ConfigError("log_floor must be positive");
}

long FrameConfig::FrameStart(long i) const {
  return i * hop + hop / 2 - window / 2;
}

std::string FrameConfig::Hash() const {
  std::ostringstream out;
  out.precision(17);
  out << "sr=" << sample_rate << ";hop=" << hop << ";win=" << window
      << ";fft=" << fft_size << ";mel=" << mel_bins << ";fmin=" << fmin
      << ";fmax=" << fmax << ";floor=" << log_floor;
  // FNV-1a keeps the digest short enough for file metadata.
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : out.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

void F0Config::Validate(int sample_rate) const {
  if (!(fmin > 0.0 && fmin < fmax && fmax < sample_rate / 2.0)) {
    throw ConfigError("f0 search range must lie inside (0, Nyquist)");
  }
  if (voicing_threshold < 0.0 || voicing_threshold > 1.0) {
    throw ConfigError("voicing_threshold must be in [0, 1]");
  }
}

long FrameCount(long num_samples, int hop) {
  return (num_samples + hop - 1) / hop;
}

Matrix FrameSignal(const AudioClip& clip, const FrameConfig& config) {
  if (clip.samples.empty()) throw ValidationError("empty audio");
  config.Validate();
  const long n = static_cast<long>(clip.samples.size());
  const long num_frames = FrameCount(n, config.hop);
  Matrix frames = Matrix::Zero(num_frames, config.window);
  for (long i = 0; i < num_frames; ++i) {
    const long start = config.FrameStart(i);
    const long lo = std::max(0L, -start);
    const long hi = std::min<long>(config.window, n - start);
    for (long j = lo; j < hi; ++j) frames(i, j) = clip.samples[start + j];
  }
  return frames;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

namespace {

std::vector<double> MelEdges(const FrameConfig& config) {
  const double lo = HzToMel(config.fmin);
  const double hi = HzToMel(config.fmax);
  const int points = config.mel_bins + 2;
  std::vector<double> edges(points);
  for (int k = 0; k < points; ++k) {
    edges[k] = MelToHz(lo + (hi - lo) * k / (points - 1));
  }
  return edges;
}

}  // namespace

std::vector<double> MelCenterFrequencies(const FrameConfig& config) {
  const std::vector<double> edges = MelEdges(config);
  return {edges.begin() + 1, edges.end() - 1};
}

Matrix MelFilterbank(const FrameConfig& config) {
  config.Validate();
  const std::vector<double> edges = MelEdges(config);
  const int bins = config.NumBins();
  const double bin_hz =
      static_cast<double>(config.sample_rate) / config.fft_size;
  Matrix bank = Matrix::Zero(config.mel_bins, bins);
  for (int m = 0; m < config.mel_bins; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = b * bin_hz;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      bank(m, b) = std::max(0.0, std::min(up, down));
    }
    if (bank.row(m).sum() <= 0.0) {
      throw ConfigError("mel filter " + std::to_string(m) +
                        " covers no FFT bin; raise fft_size or lower mel_bins");
    }
  }
  return bank;
}

Vector HannWindow(int length) {
  Vector w(length);
  for (int i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

ComplexMatrix Stft(const std::vector<double>& samples,
                   const FrameConfig& config) {
  AudioClip clip{samples, config.sample_rate};
  const Matrix frames = FrameSignal(clip, config);
  const Vector window = HannWindow(config.window);
  FFT fft = MakeHalfSpectrumFft();
  ComplexMatrix spectrum(frames.rows(), config.NumBins());
  std::vector<double> buffer(config.fft_size, 0.0);
  std::vector<std::complex<double>> out;
  for (long i = 0; i < frames.rows(); ++i) {
    std::fill(buffer.begin(), buffer.end(), 0.0);
    for (int j = 0; j < config.window; ++j) {
      buffer[j] = frames(i, j) * window[j];
    }
    fft.fwd(out, buffer);
    for (int b = 0; b < config.NumBins(); ++b) spectrum(i, b) = out[b];
  }
  return spectrum;
}

std::vector<double> Istft(const ComplexMatrix& spectrum,
                          const FrameConfig& config, long length) {
  if (spectrum.cols() != config.NumBins()) {
    throw ValidationError("spectrum bin count does not match fft_size");
  }
  const Vector window = HannWindow(config.window);
  FFT fft = MakeHalfSpectrumFft();
  std::vector<double> out(length, 0.0), norm(length, 0.0);
  std::vector<std::complex<double>> bins(config.NumBins());
  std::vector<double> frame;
  for (long i = 0; i < spectrum.rows(); ++i) {
    for (int b = 0; b < config.NumBins(); ++b) bins[b] = spectrum(i, b);
    fft.inv(frame, bins, config.fft_size);
    const long start = config.FrameStart(i);
    for (int j = 0; j < config.window; ++j) {
      const long t = start + j;
      if (t < 0 || t >= length) continue;
      out[t] += frame[j] * window[j];
      norm[t] += window[j] * window[j];
    }
  }
  for (long t = 0; t < length; ++t) {
    if (norm[t] > 1e-12) out[t] /= norm[t];
  }
  return out;
}

MelSpectrogram ComputeMelSpectrogram(const AudioClip& clip,
                                     const FrameConfig& config) {
  config.Validate();
  if (clip.sample_rate != config.sample_rate) {
    throw ConfigError("clip sample rate does not match frame config");
  }
  const Matrix bank = MelFilterbank(config);
  const ComplexMatrix spectrum = Stft(clip.samples, config);
  const Matrix magnitude = spectrum.cwiseAbs();
  Matrix mel = magnitude * bank.transpose();
  mel = mel.cwiseMax(config.log_floor).array().log().matrix();
  return {std::move(mel), config};
}

namespace {

// Voiced F0 in Hz for one raw frame, or 0.0.
double FrameF0(const double* data, int length, int sample_rate,
               const F0Config& config) {
  Eigen::Map<const Vector> raw(data, length);
  const Vector x = raw.array() - raw.mean();
  const double energy = x.squaredNorm();
  if (energy < 1e-10 * length) return 0.0;

  const int min_lag =
      std::max(2, static_cast<int>(std::floor(sample_rate / config.fmax)));
  const int max_lag = std::min(
      length - 2, static_cast<int>(std::ceil(sample_rate / config.fmin)));
  if (max_lag <= min_lag + 1) return 0.0;

  // Prefix sums of squares give the energy of each overlap in O(1).
  Vector prefix(length + 1);
  prefix[0] = 0.0;
  for (int t = 0; t < length; ++t) prefix[t + 1] = prefix[t] + x[t] * x[t];

  // Evaluate one lag beyond each end so interior peaks can be tested.
  const int lo = min_lag - 1, hi = max_lag + 1;
  std::vector<double> nccf(hi - lo + 1, 0.0);
  for (int lag = lo; lag <= hi; ++lag) {
    const int overlap = length - lag;
    const double cross = x.head(overlap).dot(x.segment(lag, overlap));
    const double e0 = prefix[overlap];
    const double e1 = prefix[length] - prefix[lag];
    const double denom = std::sqrt(e0 * e1);
    nccf[lag - lo] = denom > 0.0 ? cross / denom : 0.0;
  }
  auto r = [&](int lag) { return nccf[lag - lo]; };

  std::vector<int> peaks;
  double best = -1.0;
  for (int lag = min_lag; lag <= max_lag; ++lag) {
    if (r(lag) >= r(lag - 1) && r(lag) > r(lag + 1)) {
      peaks.push_back(lag);
      best = std::max(best, r(lag));
    }
  }
  if (peaks.empty() || best < config.voicing_threshold) return 0.0;

  int chosen = peaks.front();
  for (int lag : peaks) {
    if (r(lag) >= config.octave_tolerance * best) {
      chosen = lag;
      break;
    }
  }
  const double a = r(chosen - 1), b = r(chosen), c = r(chosen + 1);
  const double curvature = a - 2.0 * b + c;
  double offset = 0.0;
  if (curvature < 0.0) offset = std::clamp(0.5 * (a - c) / curvature, -0.5, 0.5);
  const double f0 = sample_rate / (chosen + offset);
  if (f0 < config.fmin || f0 > config.fmax) return 0.0;
  return f0;
}

}  // namespace

F0Track EstimateF0(const AudioClip& clip, const FrameConfig& frame_config,
                   const F0Config& f0_config) {
  f0_config.Validate(frame_config.sample_rate);
  const Matrix frames = FrameSignal(clip, frame_config);
  F0Track track;
  track.values.resize(frames.rows());
  for (long i = 0; i < frames.rows(); ++i) {
    track.values[i] = FrameF0(frames.row(i).data(), frame_config.window,
                              frame_config.sample_rate, f0_config);
  }
  if (f0_config.median_filter && track.values.size() >= 3) {
    // Width-3 median over voiced frames only; the voicing pattern is kept.
    std::vector<double> smoothed = track.values;
    for (size_t i = 1; i + 1 < track.values.size(); ++i) {
      if (track.values[i] == 0.0) continue;
      std::vector<double> window;
      for (size_t j = i - 1; j <= i + 1; ++j) {
        if (track.values[j] > 0.0) window.push_back(track.values[j]);
      }
      std::sort(window.begin(), window.end());
      smoothed[i] = window[window.size() / 2];
    }
    track.values = std::move(smoothed);
  }
  return track;
}

RmseTrack ComputeRmse(const AudioClip& clip, const FrameConfig& config) {
  const Matrix frames = FrameSignal(clip, config);
  RmseTrack track;
  track.values.resize(frames.rows());
  for (long i = 0; i < frames.rows(); ++i) {
    track.values[i] = std::sqrt(frames.row(i).squaredNorm() / config.window);
  }
  return track;
}

PositionTrack PositionCodes(const std::vector<int>& durations) {
  PositionTrack track;
  for (size_t p = 0; p < durations.size(); ++p) {
    const int d = durations[p];
    if (d < 1) {
      throw ValidationError("phone " + std::to_string(p) +
                            " has non-positive duration " + std::to_string(d));
    }
    for (int j = 1; j <= d; ++j) {
      track.values.push_back(static_cast<double>(j) / d);
    }
  }
  return track;
}

Matrix F0Conditioning(const F0Track& f0, double reference_hz) {
  if (!(reference_hz > 0.0)) {
    throw ValidationError("reference_hz must be positive");
  }
  Matrix cond = Matrix::Zero(static_cast<long>(f0.values.size()), 2);
  for (size_t t = 0; t < f0.values.size(); ++t) {
    if (f0.values[t] > 0.0) {
      cond(t, 0) = std::log2(f0.values[t] / reference_hz);
      cond(t, 1) = 1.0;
    }
  }
  return cond;
}

}  // namespace singvc
