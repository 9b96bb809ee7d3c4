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

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation of one forward pass in creation order, which
// is already a topological order, so Backward() walks it in reverse. Leaves
// are either constants or Parameters; parameter gradients accumulate straight
// into Parameter::grad so several tapes (or several uses on one tape) add up.
//
// Sequences that share a tensor are packed row-wise; ops that must not mix
// neighbouring sequences (convolution, pooling, recurrences) take a list of
// Segments describing the row ranges.

#ifndef SINGVC_AUTODIFF_H_
#define SINGVC_AUTODIFF_H_

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "singvc/common.h"

namespace singvc::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value once touched; empty before
  bool decay = true;
  bool trainable = true;
};

// Owns all trainable arrays plus non-trainable buffers (normalization running
// statistics). Iteration order is insertion order, which fixes the layout of
// checkpoints and optimizer state.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);

  Parameter& Add(const std::string& name, Matrix init, bool decay);
  Parameter& Get(const std::string& name);
  const Parameter& Get(const std::string& name) const;
  bool Contains(const std::string& name) const;

  Matrix& AddBuffer(const std::string& name, Matrix init);
  Matrix& Buffer(const std::string& name);
  const Matrix& Buffer(const std::string& name) const;

  std::vector<Parameter*> All();
  std::vector<const Parameter*> All() const;
  const std::vector<std::string>& BufferNames() const { return buffer_order_; }

  void ZeroGrad();
  long NumScalars() const;

 private:
  std::deque<Parameter> params_;
  std::unordered_map<std::string, size_t> index_;
  std::map<std::string, Matrix> buffers_;
  std::vector<std::string> buffer_order_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
};

// Row range [begin, begin + length) of one sequence inside a packed tensor.
struct Segment {
  long begin = 0;
  long length = 0;
};

class Tape {
 public:
  // A tape with record = false never stores backward closures; use it for
  // inference.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var Constant(Matrix value);
  // Each parameter maps to one node per tape.
  Var Param(Parameter& p);

  const Matrix& Value(int id) const;
  bool RequiresGrad(int id) const { return nodes_[id].requires_grad; }
  // Gradient buffer, zero-initialised on first access.
  Matrix& Grad(int id);

  // Called with the tape and the id of the node being differentiated.
  using BackwardFn = std::function<void(Tape&, int)>;
  Var Push(Matrix value, std::initializer_list<Var> parents, BackwardFn fn);
  Var Push(Matrix value, const std::vector<Var>& parents, BackwardFn fn);

  // Grad(id) += lhs^T * g. Parameter leaves defer the product and apply all
  // of a tape's contributions as one stacked GEMM at the end of Backward.
  void AccumulateProduct(int id, const Matrix& lhs, const Matrix& g);

  // Seeds d(loss)/d(loss) = 1 for a 1x1 loss and propagates.
  void Backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Parameter* param = nullptr;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  bool record_;
  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
  // Deferred (lhs, g) pairs per parameter node.
  std::map<int, std::vector<std::pair<Matrix, Matrix>>> pending_;
};

// Elementwise and linear algebra.
Var MatMul(Var a, Var b);
// x * weight + bias (bias is a 1 x out row, broadcast over rows; may be
// invalid for no bias).
Var Linear(Var x, Var weight, Var bias);
Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
// Adds a 1 x C row to every row of a.
Var AddRow(Var a, Var row);
Var Tanh(Var a);
Var Sigmoid(Var a);
Var Relu(Var a);
// a .* mask with a constant mask (dropout).
Var MaskMul(Var a, const Matrix& mask);

// Shape manipulation.
Var ConcatCols(const std::vector<Var>& parts);
Var ConcatRows(const std::vector<Var>& parts);
Var SliceCols(Var a, long begin, long count);
Var SliceRows(Var a, long begin, long count);
// out.row(i) = a.row(index[i]); gradients scatter-add back.
Var GatherRows(Var a, const std::vector<long>& index);

// Reductions.
Var SumSquares(Var a);
// mean(|pred - target|) over all entries; 1 x 1.
Var L1Mean(Var pred, const Matrix& target);

// Sequence ops on packed tensors.
//
// For each row t of each segment, concatenates rows t - (k-1)/2 .. t + k/2
// (zeros outside the segment) into one row of width k * C.
Var Unfold(Var x, int kernel, const std::vector<Segment>& segments);
// Max over rows {t, t+1} within each segment; the last row passes through.
Var MaxPool2(Var x, const std::vector<Segment>& segments);
// Column-wise normalization. In training mode uses the statistics of all rows
// and updates the running buffers in place; otherwise uses the buffers.
Var BatchNorm(Var x, Var gamma, Var beta, Matrix* running_mean,
              Matrix* running_var, bool training, double momentum = 0.1,
              double eps = 1e-5);

// Gated recurrent unit, gate order [reset, update, candidate]:
//   r = sigmoid(gx_r + gh_r), z = sigmoid(gx_z + gh_z),
//   n = tanh(gx_n + r .* gh_n), h' = (1 - z) .* n + z .* h,
// where gh = h * w_hh + b_hh and gx is the precomputed input projection.
Var GruCell(Var gx, Var h, Var w_hh, Var b_hh);
// Runs the recurrence over every segment of a packed gx (rows x 3H), from a
// zero state, forwards or backwards in time.
Var GruSequence(Var gx, Var w_hh, Var b_hh,
                const std::vector<Segment>& segments, bool reverse);

// One step of windowed additive attention for a batch of packed sequences.
// Row b of query_proj attends over rows [max(0, t - w), min(len_b, t + w + 1))
// of sequence b, scoring each with v . tanh(query_proj_b + key_proj_j) plus
// offset_bias(0, j - t + w), a learned preference for each position relative
// to t. Returns batch x D contexts from `values`. When `windows` is given it receives
// the first row and the softmax weights of each sequence's window.
struct AttentionWindow {
  long begin = 0;  // relative to the sequence start
  Vector weights;
};
Var LocalAttentionStep(Var query_proj, Var key_proj, Var values, Var v,
                       Var offset_bias,
                       const std::vector<Segment>& sequences, long t,
                       int window,
                       std::vector<AttentionWindow>* windows = nullptr);

// Picks row `row` of every step output (each steps[k] is B_k x (r * C)),
// unfolds it into r frames of width C and stacks them; truncates to `length`.
Var CollectSteps(const std::vector<Var>& steps, long row, int frames_per_step,
                 long length);

}  // namespace singvc::ad

#endif  // SINGVC_AUTODIFF_H_
