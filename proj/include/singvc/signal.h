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

// Frame-level feature extraction: mel-spectrogram, F0, RMS energy, position
// codes, plus the STFT pair shared with the vocoder.

#ifndef SINGVC_SIGNAL_H_
#define SINGVC_SIGNAL_H_

#include <complex>
#include <string>
#include <vector>

#include "singvc/common.h"

namespace singvc {

using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = 24000;

  // Throws ValidationError on a non-positive rate or non-finite samples.
  void Validate() const;
};

// Frame i is centred on the middle of hop segment [i*hop, (i+1)*hop) and spans
// `window` samples; samples outside the clip read as zero.
struct FrameConfig {
  int sample_rate = 24000;
  int hop = 300;
  int window = 1200;
  int fft_size = 2048;
  int mel_bins = 80;
  double fmin = 40.0;
  double fmax = 12000.0;
  // Mel magnitudes are clamped here before the log.
  double log_floor = 1e-5;

  void Validate() const;
  int NumBins() const { return fft_size / 2 + 1; }
  // First sample index covered by frame i (may be negative).
  long FrameStart(long i) const;
  // Stable textual digest of every field; used to version feature caches.
  std::string Hash() const;

  bool operator==(const FrameConfig&) const = default;
};

struct F0Config {
  double fmin = 60.0;
  double fmax = 1000.0;
  // Minimum normalized autocorrelation peak for a frame to count as voiced.
  double voicing_threshold = 0.3;
  // Candidate peaks within this fraction of the best peak are preferred when
  // they sit at a shorter lag; guards against sub-harmonic picks.
  double octave_tolerance = 0.95;
  bool median_filter = false;

  void Validate(int sample_rate) const;
  bool operator==(const F0Config&) const = default;
};

struct MelSpectrogram {
  Matrix frames;  // T x mel_bins, natural-log magnitudes
  FrameConfig config;

  long NumFrames() const { return frames.rows(); }
};

// Track values are stored per frame; F0 uses 0.0 for unvoiced frames.
struct F0Track {
  std::vector<double> values;
};
struct RmseTrack {
  std::vector<double> values;
};
struct PositionTrack {
  std::vector<double> values;
};

long FrameCount(long num_samples, int hop);

// Raw (unwindowed) frames, T x window.
Matrix FrameSignal(const AudioClip& clip, const FrameConfig& config);

double HzToMel(double hz);
double MelToHz(double mel);
std::vector<double> MelCenterFrequencies(const FrameConfig& config);
// mel_bins x (fft_size/2 + 1) triangular filters with unit peak.
Matrix MelFilterbank(const FrameConfig& config);

// Periodic Hann window.
Vector HannWindow(int length);

ComplexMatrix Stft(const std::vector<double>& samples,
                   const FrameConfig& config);
// Least-squares overlap-add inverse of Stft, trimmed to `length` samples.
std::vector<double> Istft(const ComplexMatrix& spectrum,
                          const FrameConfig& config, long length);

MelSpectrogram ComputeMelSpectrogram(const AudioClip& clip,
                                     const FrameConfig& config);
F0Track EstimateF0(const AudioClip& clip, const FrameConfig& frame_config,
                   const F0Config& f0_config = {});
RmseTrack ComputeRmse(const AudioClip& clip, const FrameConfig& config);

// Frame j (1-based) of a phone lasting d frames gets j / d.
PositionTrack PositionCodes(const std::vector<int>& durations);

constexpr double kF0ReferenceHz = 220.0;

// T x 2: (log2(f0 / reference) or 0 when unvoiced, voicing flag).
Matrix F0Conditioning(const F0Track& f0, double reference_hz = kF0ReferenceHz);

}  // namespace singvc

#endif  // SINGVC_SIGNAL_H_
