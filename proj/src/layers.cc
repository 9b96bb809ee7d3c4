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

#include "singvc/layers.h"

#include <cmath>

namespace singvc::nn {

namespace {

Matrix UniformMatrix(long rows, long cols, double limit, Rng* rng) {
  Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = rng->Uniform(-limit, limit);
  return m;
}

}  // namespace

Matrix GlorotUniform(long fan_in, long fan_out, Rng* rng) {
  return UniformMatrix(fan_in, fan_out, std::sqrt(6.0 / (fan_in + fan_out)),
                       rng);
}

std::vector<Segment> PackSegments(const std::vector<long>& lengths) {
  std::vector<Segment> out;
  long begin = 0;
  for (long n : lengths) {
    out.push_back({begin, n});
    begin += n;
  }
  return out;
}

Dense::Dense(ParameterSet* params, const std::string& prefix, long in,
             long out, Rng* rng, bool bias)
    : prefix_(prefix), in_(in), out_(out), bias_(bias) {
  params->Add(prefix + "/w", GlorotUniform(in, out, rng), true);
  if (bias) params->Add(prefix + "/b", Matrix::Zero(1, out), false);
}

Var Dense::operator()(const Pass& pass, Var x) const {
  return ad::Linear(x, pass.P(prefix_ + "/w"),
                    bias_ ? pass.P(prefix_ + "/b") : Var{});
}

BatchNormLayer::BatchNormLayer(ParameterSet* params, const std::string& prefix,
                               long dim)
    : prefix_(prefix) {
  params->Add(prefix + "/gamma", Matrix::Ones(1, dim), false);
  params->Add(prefix + "/beta", Matrix::Zero(1, dim), false);
  params->AddBuffer(prefix + "/running_mean", Matrix::Zero(1, dim));
  params->AddBuffer(prefix + "/running_var", Matrix::Ones(1, dim));
}

Var BatchNormLayer::operator()(const Pass& pass, Var x) const {
  return ad::BatchNorm(x, pass.P(prefix_ + "/gamma"), pass.P(prefix_ + "/beta"),
                       &pass.params->Buffer(prefix_ + "/running_mean"),
                       &pass.params->Buffer(prefix_ + "/running_var"),
                       pass.training);
}

Conv1d::Conv1d(ParameterSet* params, const std::string& prefix, long in,
               long out, int kernel, Rng* rng)
    : prefix_(prefix), kernel_(kernel) {
  params->Add(prefix + "/w", GlorotUniform(kernel * in, out, rng), true);
}

Var Conv1d::operator()(const Pass& pass, Var x,
                       const std::vector<Segment>& segments) const {
  Var cols = kernel_ == 1 ? x : ad::Unfold(x, kernel_, segments);
  return ad::MatMul(cols, pass.P(prefix_ + "/w"));
}

Highway::Highway(ParameterSet* params, const std::string& prefix, long dim,
                 Rng* rng)
    : transform_(params, prefix + "/transform", dim, dim, rng),
      gate_(params, prefix + "/gate", dim, dim, rng) {
  // Start close to the identity path.
  params->Get(prefix + "/gate/b").value.setConstant(-1.0);
}

Var Highway::operator()(const Pass& pass, Var x) const {
  Var h = ad::Relu(transform_(pass, x));
  Var t = ad::Sigmoid(gate_(pass, x));
  return ad::Add(x, ad::Mul(t, ad::Sub(h, x)));
}

Gru::Gru(ParameterSet* params, const std::string& prefix, long in, long hidden,
         Rng* rng)
    : prefix_(prefix), hidden_(hidden) {
  const double k = 1.0 / std::sqrt(static_cast<double>(hidden));
  params->Add(prefix + "/w_ih", UniformMatrix(in, 3 * hidden, k, rng), true);
  params->Add(prefix + "/w_hh", UniformMatrix(hidden, 3 * hidden, k, rng),
              true);
  params->Add(prefix + "/b_ih", Matrix::Zero(1, 3 * hidden), false);
  params->Add(prefix + "/b_hh", Matrix::Zero(1, 3 * hidden), false);
}

Var Gru::InputProjection(const Pass& pass, Var x) const {
  return ad::Linear(x, pass.P(prefix_ + "/w_ih"), pass.P(prefix_ + "/b_ih"));
}

Var Gru::operator()(const Pass& pass, Var x,
                    const std::vector<Segment>& segments, bool reverse) const {
  return ad::GruSequence(InputProjection(pass, x), pass.P(prefix_ + "/w_hh"),
                         pass.P(prefix_ + "/b_hh"), segments, reverse);
}

Var Gru::Step(const Pass& pass, Var gx, Var h) const {
  return ad::GruCell(gx, h, pass.P(prefix_ + "/w_hh"),
                     pass.P(prefix_ + "/b_hh"));
}

Cbhg::Cbhg(ParameterSet* params, const std::string& prefix,
           const CbhgConfig& c, Rng* rng)
    : config_(c) {
  if (c.input_dim < 1 || c.bank_size < 1 || c.channels < 1 ||
      c.projection_dim < 1 || c.highway_layers < 0 || c.highway_dim < 1 ||
      c.gru_dim < 1) {
    throw ConfigError("CBHG dimensions must be positive");
  }
  for (int k = 1; k <= c.bank_size; ++k) {
    const std::string name = prefix + "/bank" + std::to_string(k);
    bank_.emplace_back(params, name, c.input_dim, c.channels, k, rng);
    bank_norm_.emplace_back(params, name + "/bn", c.channels);
  }
  proj1_ = Conv1d(params, prefix + "/proj1", c.bank_size * c.channels,
                  c.projection_dim, 3, rng);
  proj1_norm_ = BatchNormLayer(params, prefix + "/proj1/bn", c.projection_dim);
  proj2_ = Conv1d(params, prefix + "/proj2", c.projection_dim, c.input_dim, 3,
                  rng);
  proj2_norm_ = BatchNormLayer(params, prefix + "/proj2/bn", c.input_dim);
  has_pre_highway_ = c.input_dim != c.highway_dim;
  if (has_pre_highway_) {
    pre_highway_ = Dense(params, prefix + "/pre_highway", c.input_dim,
                         c.highway_dim, rng, false);
  }
  for (int i = 0; i < c.highway_layers; ++i) {
    highways_.emplace_back(params, prefix + "/highway" + std::to_string(i),
                           c.highway_dim, rng);
  }
  forward_ = Gru(params, prefix + "/gru_fw", c.highway_dim, c.gru_dim, rng);
  backward_ = Gru(params, prefix + "/gru_bw", c.highway_dim, c.gru_dim, rng);
}

Var Cbhg::operator()(const Pass& pass, Var x,
                     const std::vector<Segment>& segments) const {
  std::vector<Var> bank;
  bank.reserve(bank_.size());
  for (size_t k = 0; k < bank_.size(); ++k) {
    bank.push_back(ad::Relu(bank_norm_[k](pass, bank_[k](pass, x, segments))));
  }
  Var y = ad::MaxPool2(ad::ConcatCols(bank), segments);
  y = ad::Relu(proj1_norm_(pass, proj1_(pass, y, segments)));
  y = proj2_norm_(pass, proj2_(pass, y, segments));
  y = ad::Add(y, x);
  if (has_pre_highway_) y = pre_highway_(pass, y);
  for (const Highway& h : highways_) y = h(pass, y);
  return ad::ConcatCols(
      {forward_(pass, y, segments, false), backward_(pass, y, segments, true)});
}

}  // namespace singvc::nn
