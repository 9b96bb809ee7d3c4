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

#ifndef SINGVC_COMMON_H_
#define SINGVC_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace singvc {

// Row-major so that a row is one frame (or one phone) and row slices are
// contiguous.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (framing, model dims, cli config keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed inputs: bad durations, unknown symbols, shape mismatches.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Phone durations that cannot be reconciled with the extracted frame count.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// File system, WAV, cache and checkpoint failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// Deterministic random source. The std distributions are implementation
// defined, so the few we need are derived from raw mt19937_64 output to keep
// runs bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of resolution.
  double Uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  double Normal();
  // Uniform integer in [0, n).
  uint64_t Below(uint64_t n);

  std::string Serialize() const;
  void Deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace singvc

#endif  // SINGVC_COMMON_H_
