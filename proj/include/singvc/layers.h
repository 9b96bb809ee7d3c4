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

// Network building blocks on packed sequences. Each layer registers its
// arrays in a ParameterSet under a hierarchical prefix ("encoder/bank3/w")
// and keeps only the names, so copies of the set can be swapped in freely.

#ifndef SINGVC_LAYERS_H_
#define SINGVC_LAYERS_H_

#include <string>
#include <vector>

#include "singvc/autodiff.h"

namespace singvc::nn {

using ad::ParameterSet;
using ad::Segment;
using ad::Tape;
using ad::Var;

// Per-call state shared by every layer of one forward pass.
struct Pass {
  Tape* tape = nullptr;
  ParameterSet* params = nullptr;
  bool training = false;
  // Dropout masks; required when training.
  Rng* rng = nullptr;

  Var P(const std::string& name) const {
    return tape->Param(params->Get(name));
  }
};

// Glorot-uniform weight; bias and embedding helpers.
Matrix GlorotUniform(long fan_in, long fan_out, Rng* rng);

class Dense {
 public:
  Dense() = default;
  Dense(ParameterSet* params, const std::string& prefix, long in, long out,
        Rng* rng, bool bias = true);
  Var operator()(const Pass& pass, Var x) const;
  long in() const { return in_; }
  long out() const { return out_; }

 private:
  std::string prefix_;
  long in_ = 0, out_ = 0;
  bool bias_ = true;
};

// Batch normalization over channels with running statistics kept as
// buffers "<prefix>/running_mean" and "<prefix>/running_var".
class BatchNormLayer {
 public:
  BatchNormLayer() = default;
  BatchNormLayer(ParameterSet* params, const std::string& prefix, long dim);
  Var operator()(const Pass& pass, Var x) const;

 private:
  std::string prefix_;
};

// Same-length 1-D convolution over each segment: kernel k covers
// t - (k-1)/2 .. t + k/2, no bias (a batch norm always follows).
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterSet* params, const std::string& prefix, long in, long out,
         int kernel, Rng* rng);
  Var operator()(const Pass& pass, Var x,
                 const std::vector<Segment>& segments) const;

 private:
  std::string prefix_;
  int kernel_ = 1;
};

class Highway {
 public:
  Highway() = default;
  Highway(ParameterSet* params, const std::string& prefix, long dim, Rng* rng);
  Var operator()(const Pass& pass, Var x) const;

 private:
  Dense transform_, gate_;
};

// Gated recurrent layer over packed segments with a zero initial state.
class Gru {
 public:
  Gru() = default;
  Gru(ParameterSet* params, const std::string& prefix, long in, long hidden,
      Rng* rng);
  Var operator()(const Pass& pass, Var x, const std::vector<Segment>& segments,
                 bool reverse) const;
  // Input projection for step-wise use (x * w_ih + b_ih).
  Var InputProjection(const Pass& pass, Var x) const;
  // One step from an explicit state given a precomputed input projection.
  Var Step(const Pass& pass, Var gx, Var h) const;
  long hidden() const { return hidden_; }

 private:
  std::string prefix_;
  long hidden_ = 0;
};

struct CbhgConfig {
  long input_dim = 80;
  int bank_size = 8;
  long channels = 128;
  // The second projection maps back to input_dim for the residual.
  long projection_dim = 128;
  int highway_layers = 4;
  long highway_dim = 128;
  long gru_dim = 128;  // per direction

  long OutputDim() const { return 2 * gru_dim; }
};

// Convolution bank, stride-1 max pooling, two convolutional projections with
// a residual connection, highway stack and a bidirectional GRU.
class Cbhg {
 public:
  Cbhg() = default;
  Cbhg(ParameterSet* params, const std::string& prefix, const CbhgConfig& c,
       Rng* rng);
  Var operator()(const Pass& pass, Var x,
                 const std::vector<Segment>& segments) const;
  const CbhgConfig& config() const { return config_; }

 private:
  CbhgConfig config_;
  std::vector<Conv1d> bank_;
  std::vector<BatchNormLayer> bank_norm_;
  Conv1d proj1_, proj2_;
  BatchNormLayer proj1_norm_, proj2_norm_;
  Dense pre_highway_;
  bool has_pre_highway_ = false;
  std::vector<Highway> highways_;
  Gru forward_, backward_;
};

// Segments for consecutive sequences of the given lengths.
std::vector<Segment> PackSegments(const std::vector<long>& lengths);

}  // namespace singvc::nn

#endif  // SINGVC_LAYERS_H_
