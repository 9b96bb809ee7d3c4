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

#include "singvc/vocoder.h"

#include <cmath>

#include <Eigen/QR>

namespace singvc {

namespace {

using Complex = std::complex<double>;

ComplexMatrix UnitPhase(const ComplexMatrix& z) {
  ComplexMatrix out(z.rows(), z.cols());
  for (long i = 0; i < z.size(); ++i) {
    const double a = std::abs(z.data()[i]);
    out.data()[i] = a > 1e-16 ? z.data()[i] / a : Complex(1.0, 0.0);
  }
  return out;
}

// Lawson-Hanson active-set solver for min |A x - b| subject to x >= 0.
// Columns of the filterbank have at most two non-zeros, so the passive set
// stays small and each least-squares solve is cheap.
Vector Nnls(const Matrix& a, const Matrix& gram, const Vector& b) {
  const long n = a.cols();
  const Vector atb = a.transpose() * b;
  Vector x = Vector::Zero(n);
  std::vector<bool> passive(n, false);
  const double tol = 1e-10 * std::max(1.0, atb.cwiseAbs().maxCoeff());
  const int max_outer = 3 * static_cast<int>(a.rows());
  for (int outer = 0; outer < max_outer; ++outer) {
    const Vector w = atb - gram * x;
    long best = -1;
    for (long j = 0; j < n; ++j) {
      if (!passive[j] && w[j] > tol && (best < 0 || w[j] > w[best])) best = j;
    }
    if (best < 0) break;
    passive[best] = true;
    for (int inner = 0; inner < max_outer; ++inner) {
      std::vector<long> cols;
      for (long j = 0; j < n; ++j) {
        if (passive[j]) cols.push_back(j);
      }
      Matrix sub(a.rows(), static_cast<long>(cols.size()));
      for (size_t k = 0; k < cols.size(); ++k) sub.col(k) = a.col(cols[k]);
      const Vector z = sub.colPivHouseholderQr().solve(b);
      double alpha = 1.0;
      for (size_t k = 0; k < cols.size(); ++k) {
        if (z[k] <= 0.0) {
          const double xi = x[cols[k]];
          alpha = std::min(alpha, xi / (xi - z[k]));
        }
      }
      for (size_t k = 0; k < cols.size(); ++k) {
        x[cols[k]] += alpha * (z[k] - x[cols[k]]);
      }
      if (alpha >= 1.0) break;
      for (long j : cols) {
        if (x[j] <= tol) {
          x[j] = 0.0;
          passive[j] = false;
        }
      }
    }
  }
  return x.cwiseMax(0.0);
}

}  // namespace

void GriffinLimConfig::Validate() const {
  if (iterations < 1) throw ConfigError("griffin_lim.iterations must be >= 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("griffin_lim.momentum must lie in [0, 1)");
  }
  if (!(power > 0.0)) throw ConfigError("griffin_lim.power must be positive");
}

Matrix MelToLinear(const MelSpectrogram& mel) {
  const FrameConfig& config = mel.config;
  const Matrix bank = MelFilterbank(config);
  if (mel.frames.cols() != bank.rows()) {
    throw ConfigError("mel has " + std::to_string(mel.frames.cols()) +
                      " bins but its config has " +
                      std::to_string(bank.rows()));
  }
  const Matrix magnitude =
      (mel.frames.array().exp() - config.log_floor).cwiseMax(0.0).matrix();
  const Matrix gram = bank.transpose() * bank;
  Matrix out = Matrix::Zero(mel.frames.rows(), bank.cols());
  for (long t = 0; t < magnitude.rows(); ++t) {
    if (magnitude.row(t).maxCoeff() <= 0.0) continue;
    out.row(t) = Nnls(bank, gram, magnitude.row(t).transpose()).transpose();
  }
  return out;
}

AudioClip GriffinLim(const Matrix& linear, const FrameConfig& config,
                     const GriffinLimConfig& gl,
                     std::vector<double>* convergence) {
  gl.Validate();
  config.Validate();
  if (linear.cols() != config.NumBins()) {
    throw ConfigError("magnitudes have " + std::to_string(linear.cols()) +
                      " bins; fft_size implies " +
                      std::to_string(config.NumBins()));
  }
  const long length = linear.rows() * config.hop;
  AudioClip out{std::vector<double>(length, 0.0), config.sample_rate};
  if (convergence != nullptr) convergence->clear();
  if (linear.size() == 0 || linear.maxCoeff() <= 10.0 * config.log_floor) {
    return out;
  }

  const Matrix target = linear.array().pow(gl.power).matrix();
  const double target_norm = target.norm();
  const ComplexMatrix target_c = target.cast<Complex>();
  auto project = [&](const ComplexMatrix& phase) {
    return Stft(Istft(target_c.cwiseProduct(phase), config, length), config);
  };
  auto error = [&](const ComplexMatrix& rebuilt) {
    return (rebuilt.cwiseAbs() - target).norm() / target_norm;
  };

  ComplexMatrix phase = ComplexMatrix::Ones(target.rows(), target.cols());
  ComplexMatrix rebuilt = project(phase);
  ComplexMatrix previous = ComplexMatrix::Zero(target.rows(), target.cols());
  double err = error(rebuilt);
  const double alpha = gl.momentum / (1.0 + gl.momentum);
  bool stalled = false;
  for (int it = 0; it < gl.iterations; ++it) {
    if (!stalled) {
      ComplexMatrix candidate = UnitPhase(rebuilt - alpha * previous);
      ComplexMatrix next = project(candidate);
      double next_err = error(next);
      if (next_err > err && alpha > 0.0) {
        candidate = UnitPhase(rebuilt);
        next = project(candidate);
        next_err = error(next);
      }
      if (next_err > err) {
        stalled = true;
      } else {
        previous = std::move(rebuilt);
        rebuilt = std::move(next);
        phase = std::move(candidate);
        err = next_err;
      }
    }
    if (convergence != nullptr) convergence->push_back(err);
  }

  out.samples = Istft(target_c.cwiseProduct(phase), config, length);
  double peak = 0.0;
  for (double s : out.samples) {
    if (!std::isfinite(s)) throw ValidationError("vocoder produced NaN");
    peak = std::max(peak, std::abs(s));
  }
  if (peak > 0.0) {
    for (double& s : out.samples) s *= kVocoderPeak / peak;
  }
  return out;
}

AudioClip Vocode(const MelSpectrogram& mel, const GriffinLimConfig& gl) {
  return GriffinLim(MelToLinear(mel), mel.config, gl);
}

}  // namespace singvc
