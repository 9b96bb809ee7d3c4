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

// Finite-difference checks for every differentiable op.

#include <cmath>
#include <functional>
#include <memory>

#include "doctest.h"
#include "singvc/autodiff.h"

namespace singvc::ad {
namespace {

Matrix RandomMatrix(Rng& rng, long rows, long cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (long i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.Normal();
  return m;
}

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Loss = sum(out .* probe) for a fixed random probe; compares the analytic
// gradient of every parameter with central differences.
double MaxRelativeError(ParameterSet& params, const Builder& build,
                        uint64_t seed = 1) {
  Rng rng(seed);
  Matrix probe;
  auto loss_of = [&](bool record) {
    auto tape = std::make_unique<Tape>(record);
    std::vector<Var> vars;
    for (Parameter* p : params.All()) vars.push_back(tape->Param(*p));
    Var out = build(*tape, vars);
    if (probe.size() == 0) probe = RandomMatrix(rng, out.rows(), out.cols());
    Var loss = SumSquares(Scale(Add(out, tape->Constant(probe)), 0.5));
    return std::make_pair(std::move(tape), loss);
  };
  params.ZeroGrad();
  auto [tape, loss] = loss_of(true);
  tape->Backward(loss);
  double worst = 0.0;
  const double h = 1e-6;
  for (Parameter* p : params.All()) {
    Matrix numeric(p->value.rows(), p->value.cols());
    for (long i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = loss_of(false).second.value()(0, 0);
      p->value.data()[i] = saved - h;
      const double down = loss_of(false).second.value()(0, 0);
      p->value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double denom =
        std::max({numeric.norm(), p->grad.norm(), 1e-8});
    worst = std::max(worst, (numeric - p->grad).norm() / denom);
  }
  return worst;
}

TEST_CASE("elementwise and linear ops have correct gradients") {
  Rng rng(2);
  ParameterSet params;
  params.Add("x", RandomMatrix(rng, 4, 3), true);
  params.Add("w", RandomMatrix(rng, 3, 5), true);
  params.Add("b", RandomMatrix(rng, 1, 5), false);
  params.Add("y", RandomMatrix(rng, 4, 5), true);
  const double err = MaxRelativeError(params, [](Tape&, std::vector<Var>& v) {
    Var lin = Linear(v[0], v[1], v[2]);
    Var a = Tanh(lin);
    Var b = Sigmoid(Mul(lin, v[3]));
    Var c = Relu(Sub(MatMul(v[0], v[1]), v[3]));
    Var d = AddRow(Scale(c, 0.7), v[2]);
    return Add(Add(a, b), d);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("shape ops have correct gradients") {
  Rng rng(3);
  ParameterSet params;
  params.Add("a", RandomMatrix(rng, 5, 3), true);
  params.Add("b", RandomMatrix(rng, 5, 2), true);
  const double err = MaxRelativeError(params, [](Tape&, std::vector<Var>& v) {
    Var cat = ConcatCols({v[0], v[1], v[0]});
    Var sliced = SliceCols(cat, 1, 4);
    Var rows = ConcatRows({SliceRows(sliced, 1, 3), sliced});
    return GatherRows(rows, {0, 0, 7, 2, 5, 5, 5});
  });
  CHECK(err < 1e-6);
}

TEST_CASE("l1 loss gradient") {
  Rng rng(4);
  ParameterSet params;
  params.Add("p", RandomMatrix(rng, 6, 4), true);
  const Matrix target = RandomMatrix(rng, 6, 4);
  const double err =
      MaxRelativeError(params, [&](Tape&, std::vector<Var>& v) {
        return L1Mean(v[0], target);
      });
  CHECK(err < 1e-6);
}

TEST_CASE("convolution unfold, pooling and batch norm gradients") {
  Rng rng(5);
  ParameterSet params;
  params.Add("x", RandomMatrix(rng, 9, 3), true);
  params.Add("w", RandomMatrix(rng, 4 * 3, 2), true);
  params.Add("gamma", RandomMatrix(rng, 1, 2), false);
  params.Add("beta", RandomMatrix(rng, 1, 2), false);
  Matrix rm = Matrix::Zero(1, 2), rv = Matrix::Ones(1, 2);
  const std::vector<Segment> segs = {{0, 4}, {4, 5}};
  for (bool training : {true, false}) {
    const double err =
        MaxRelativeError(params, [&](Tape&, std::vector<Var>& v) {
          Var conv = MatMul(Unfold(v[0], 4, segs), v[1]);
          Var pooled = MaxPool2(conv, segs);
          return BatchNorm(pooled, v[2], v[3], &rm, &rv, training);
        });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("unfold respects segment boundaries") {
  Tape tape(false);
  Matrix x(5, 1);
  x << 1, 2, 3, 4, 5;
  Var out = Unfold(tape.Constant(x), 3, {{0, 2}, {2, 3}});
  Matrix expected(5, 3);
  expected << 0, 1, 2,  //
      1, 2, 0,          //
      0, 3, 4,          //
      3, 4, 5,          //
      4, 5, 0;
  CHECK(out.value() == expected);
}

TEST_CASE("gru cell and gru sequence gradients") {
  Rng rng(6);
  const int hidden = 3;
  ParameterSet params;
  params.Add("gx", RandomMatrix(rng, 7, 3 * hidden), true);
  params.Add("h", RandomMatrix(rng, 7, hidden), true);
  params.Add("whh", RandomMatrix(rng, hidden, 3 * hidden, 0.5), true);
  params.Add("bhh", RandomMatrix(rng, 1, 3 * hidden, 0.5), false);
  const double cell = MaxRelativeError(params, [](Tape&, std::vector<Var>& v) {
    Var h1 = GruCell(v[0], v[1], v[2], v[3]);
    return GruCell(v[0], h1, v[2], v[3]);
  });
  CHECK(cell < 1e-6);
  for (bool reverse : {false, true}) {
    const double seq =
        MaxRelativeError(params, [&](Tape&, std::vector<Var>& v) {
          return GruSequence(v[0], v[2], v[3], {{0, 3}, {3, 4}}, reverse);
        });
    CHECK(seq < 1e-6);
  }
}

TEST_CASE("gru sequence equals unrolled cells") {
  Rng rng(7);
  const int hidden = 4;
  ParameterSet params;
  auto& gx = params.Add("gx", RandomMatrix(rng, 5, 3 * hidden), true);
  auto& whh = params.Add("whh", RandomMatrix(rng, hidden, 3 * hidden), true);
  auto& bhh = params.Add("bhh", RandomMatrix(rng, 1, 3 * hidden), false);
  Tape tape(false);
  Var seq = GruSequence(tape.Param(gx), tape.Param(whh), tape.Param(bhh),
                        {{0, 5}}, true);
  Var h = tape.Constant(Matrix::Zero(1, hidden));
  for (long t = 4; t >= 0; --t) {
    h = GruCell(SliceRows(tape.Param(gx), t, 1), h, tape.Param(whh),
                tape.Param(bhh));
    CHECK((seq.value().row(t) - h.value()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("local attention step and step collection gradients") {
  Rng rng(8);
  ParameterSet params;
  params.Add("q", RandomMatrix(rng, 2, 4), true);
  params.Add("k", RandomMatrix(rng, 11, 4), true);
  params.Add("vals", RandomMatrix(rng, 11, 3), true);
  params.Add("v", RandomMatrix(rng, 1, 4), true);
  params.Add("offset_bias", RandomMatrix(rng, 1, 5), false);
  const std::vector<Segment> seqs = {{0, 6}, {6, 5}};
  const double err = MaxRelativeError(params, [&](Tape&, std::vector<Var>& v) {
    Var c0 = LocalAttentionStep(v[0], v[1], v[2], v[3], v[4], seqs, 0, 2);
    Var c1 = LocalAttentionStep(v[0], v[1], v[2], v[3], v[4], seqs, 4, 2);
    Var c2 = LocalAttentionStep(SliceRows(v[0], 0, 1), v[1], v[2], v[3], v[4],
                                {seqs[0]}, 5, 2);
    Var steps0 = ConcatCols({c0, c1});
    Var steps1 = ConcatCols({c2, c2});
    return CollectSteps({steps0, steps0, steps1}, 0, 2, 5);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("parameters frozen with trainable=false receive no gradient") {
  Rng rng(9);
  ParameterSet params;
  auto& a = params.Add("a", RandomMatrix(rng, 2, 2), true);
  auto& b = params.Add("b", RandomMatrix(rng, 2, 2), true);
  b.trainable = false;
  params.ZeroGrad();
  Tape tape;
  Var loss = SumSquares(MatMul(tape.Param(a), tape.Param(b)));
  tape.Backward(loss);
  CHECK(a.grad.norm() > 0.0);
  CHECK(b.grad.norm() == 0.0);
}

TEST_CASE("shape errors are reported") {
  Tape tape;
  Var a = tape.Constant(Matrix::Zero(2, 3));
  Var b = tape.Constant(Matrix::Zero(2, 2));
  CHECK_THROWS_AS(MatMul(a, b), ValidationError);
  CHECK_THROWS_AS(Add(a, b), ValidationError);
  CHECK_THROWS_AS(SliceRows(a, 1, 2), ValidationError);
  CHECK_THROWS_AS(tape.Backward(a), ValidationError);
}

}  // namespace
}  // namespace singvc::ad
