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

#include "singvc/autodiff.h"

#include <algorithm>
#include <cmath>

namespace singvc::ad {

// ---------------------------------------------------------------------------
// ParameterSet

ParameterSet::ParameterSet(const ParameterSet& other) { *this = other; }

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this == &other) return *this;
  params_ = other.params_;
  index_ = other.index_;
  buffers_ = other.buffers_;
  buffer_order_ = other.buffer_order_;
  return *this;
}

Parameter& ParameterSet::Add(const std::string& name, Matrix init,
                             bool decay) {
  if (index_.count(name)) throw ConfigError("duplicate parameter " + name);
  index_[name] = params_.size();
  params_.push_back(Parameter{name, std::move(init), Matrix(), decay, true});
  return params_.back();
}

Parameter& ParameterSet::Get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + name);
  return params_[it->second];
}

const Parameter& ParameterSet::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ValidationError("unknown parameter " + name);
  return params_[it->second];
}

bool ParameterSet::Contains(const std::string& name) const {
  return index_.count(name) > 0;
}

Matrix& ParameterSet::AddBuffer(const std::string& name, Matrix init) {
  if (buffers_.count(name)) throw ConfigError("duplicate buffer " + name);
  buffer_order_.push_back(name);
  return buffers_[name] = std::move(init);
}

Matrix& ParameterSet::Buffer(const std::string& name) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ValidationError("unknown buffer " + name);
  return it->second;
}

const Matrix& ParameterSet::Buffer(const std::string& name) const {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) throw ValidationError("unknown buffer " + name);
  return it->second;
}

std::vector<Parameter*> ParameterSet::All() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> ParameterSet::All() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParameterSet::ZeroGrad() {
  for (auto& p : params_) p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
}

long ParameterSet::NumScalars() const {
  long n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

// ---------------------------------------------------------------------------
// Tape

const Matrix& Var::value() const { return tape->Value(id); }

Var Tape::Constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, Matrix(), false, nullptr});
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::Param(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Node node;
  node.param = &p;
  node.requires_grad = record_ && p.trainable;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size() - 1);
  param_nodes_[&p] = id;
  return Var{this, id};
}

const Matrix& Tape::Value(int id) const {
  const Node& n = nodes_[id];
  return n.param ? n.param->value : n.value;
}

Matrix& Tape::Grad(int id) {
  Node& n = nodes_[id];
  Matrix& g = n.param ? n.param->grad : n.grad;
  const Matrix& v = Value(id);
  if (g.rows() != v.rows() || g.cols() != v.cols()) {
    g = Matrix::Zero(v.rows(), v.cols());
  }
  return g;
}

Var Tape::Push(Matrix value, std::initializer_list<Var> parents,
               BackwardFn fn) {
  return Push(std::move(value), std::vector<Var>(parents), std::move(fn));
}

Var Tape::Push(Matrix value, const std::vector<Var>& parents, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) {
      if (p.valid() && nodes_[p.id].requires_grad) needs = true;
    }
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs;
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::AccumulateProduct(int id, const Matrix& lhs, const Matrix& g) {
  if (nodes_[id].param == nullptr) {
    Grad(id).noalias() += lhs.transpose() * g;
    return;
  }
  pending_[id].emplace_back(lhs, g);
}

void Tape::Backward(Var loss) {
  if (!record_) throw ValidationError("Backward on a non-recording tape");
  if (loss.tape != this) throw ValidationError("loss belongs to another tape");
  if (Value(loss.id).size() != 1) {
    throw ValidationError("Backward needs a scalar loss");
  }
  if (!nodes_[loss.id].requires_grad) return;
  Grad(loss.id)(0, 0) += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, id);
  }
  for (auto& [id, parts] : pending_) {
    long rows = 0;
    for (const auto& [lhs, g] : parts) rows += lhs.rows();
    Matrix lhs_all(rows, parts.front().first.cols());
    Matrix g_all(rows, parts.front().second.cols());
    long at = 0;
    for (const auto& [lhs, g] : parts) {
      lhs_all.middleRows(at, lhs.rows()) = lhs;
      g_all.middleRows(at, g.rows()) = g;
      at += lhs.rows();
    }
    Grad(id).noalias() += lhs_all.transpose() * g_all;
  }
  pending_.clear();
}

// ---------------------------------------------------------------------------
// Ops

namespace {

[[noreturn]] void ShapeError(const char* op, const Matrix& a, const Matrix& b) {
  throw ValidationError(std::string(op) + ": shape mismatch " +
                        std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " +
                        std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()));
}

void CheckSameShape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) ShapeError(op, a, b);
}

bool Needs(Tape& t, Var v) { return v.valid() && t.RequiresGrad(v.id); }

void CheckSegments(const std::vector<Segment>& segments, long rows,
                   const char* op) {
  for (const Segment& s : segments) {
    if (s.begin < 0 || s.length < 0 || s.begin + s.length > rows) {
      throw ValidationError(std::string(op) + ": segment out of range");
    }
  }
}

}  // namespace

Var MatMul(Var a, Var b) {
  if (a.cols() != b.rows()) ShapeError("MatMul", a.value(), b.value());
  Tape& t = *a.tape;
  return t.Push(a.value() * b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    if (Needs(t, a)) t.Grad(a.id).noalias() += g * t.Value(b.id).transpose();
    if (Needs(t, b)) t.AccumulateProduct(b.id, t.Value(a.id), g);
  });
}

Var Linear(Var x, Var weight, Var bias) {
  if (x.cols() != weight.rows()) {
    ShapeError("Linear", x.value(), weight.value());
  }
  Matrix out = x.value() * weight.value();
  if (bias.valid()) {
    if (bias.rows() != 1 || bias.cols() != weight.cols()) {
      ShapeError("Linear bias", bias.value(), weight.value());
    }
    out.rowwise() += bias.value().row(0);
  }
  Tape& t = *x.tape;
  return t.Push(std::move(out), {x, weight, bias},
                [x, weight, bias](Tape& t, int self) {
                  const Matrix& g = t.Grad(self);
                  if (Needs(t, x)) {
                    t.Grad(x.id).noalias() +=
                        g * t.Value(weight.id).transpose();
                  }
                  if (Needs(t, weight)) {
                    t.AccumulateProduct(weight.id, t.Value(x.id), g);
                  }
                  if (Needs(t, bias)) t.Grad(bias.id) += g.colwise().sum();
                });
}

Var Add(Var a, Var b) {
  CheckSameShape(a.value(), b.value(), "Add");
  Tape& t = *a.tape;
  return t.Push(a.value() + b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    if (Needs(t, a)) t.Grad(a.id) += g;
    if (Needs(t, b)) t.Grad(b.id) += g;
  });
}

Var Sub(Var a, Var b) {
  CheckSameShape(a.value(), b.value(), "Sub");
  Tape& t = *a.tape;
  return t.Push(a.value() - b.value(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    if (Needs(t, a)) t.Grad(a.id) += g;
    if (Needs(t, b)) t.Grad(b.id) -= g;
  });
}

Var Mul(Var a, Var b) {
  CheckSameShape(a.value(), b.value(), "Mul");
  Tape& t = *a.tape;
  return t.Push(a.value().cwiseProduct(b.value()), {a, b},
                [a, b](Tape& t, int self) {
                  const Matrix& g = t.Grad(self);
                  if (Needs(t, a)) {
                    t.Grad(a.id) += g.cwiseProduct(t.Value(b.id));
                  }
                  if (Needs(t, b)) {
                    t.Grad(b.id) += g.cwiseProduct(t.Value(a.id));
                  }
                });
}

Var Scale(Var a, double s) {
  Tape& t = *a.tape;
  return t.Push(a.value() * s, {a}, [a, s](Tape& t, int self) {
    t.Grad(a.id) += t.Grad(self) * s;
  });
}

Var AddRow(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    ShapeError("AddRow", a.value(), row.value());
  }
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  Tape& t = *a.tape;
  return t.Push(std::move(out), {a, row}, [a, row](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    if (Needs(t, a)) t.Grad(a.id) += g;
    if (Needs(t, row)) t.Grad(row.id) += g.colwise().sum();
  });
}

Var Tanh(Var a) {
  Tape& t = *a.tape;
  return t.Push(a.value().array().tanh().matrix(), {a},
                [a](Tape& t, int self) {
                  const Matrix& y = t.Value(self);
                  t.Grad(a.id).array() +=
                      t.Grad(self).array() * (1.0 - y.array().square());
                });
}

Var Sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.Push(std::move(y), {a}, [a](Tape& t, int self) {
    const Matrix& y = t.Value(self);
    t.Grad(a.id).array() +=
        t.Grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var Relu(Var a) {
  Tape& t = *a.tape;
  return t.Push(a.value().cwiseMax(0.0), {a}, [a](Tape& t, int self) {
    t.Grad(a.id).array() +=
        (t.Value(a.id).array() > 0.0).select(t.Grad(self).array(), 0.0);
  });
}

Var MaskMul(Var a, const Matrix& mask) {
  CheckSameShape(a.value(), mask, "MaskMul");
  Tape& t = *a.tape;
  return t.Push(a.value().cwiseProduct(mask), {a}, [a, mask](Tape& t, int self) {
    t.Grad(a.id) += t.Grad(self).cwiseProduct(mask);
  });
}

Var ConcatCols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("ConcatCols: no inputs");
  const long rows = parts[0].rows();
  long cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) ShapeError("ConcatCols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(rows, cols);
  long c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  Tape& t = *parts[0].tape;
  return t.Push(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    long c = 0;
    for (const Var& p : parts) {
      const long w = t.Value(p.id).cols();
      if (Needs(t, p)) t.Grad(p.id) += g.middleCols(c, w);
      c += w;
    }
  });
}

Var ConcatRows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ValidationError("ConcatRows: no inputs");
  const long cols = parts[0].cols();
  long rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) ShapeError("ConcatRows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, cols);
  long r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  Tape& t = *parts[0].tape;
  return t.Push(std::move(out), parts, [parts](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    long r = 0;
    for (const Var& p : parts) {
      const long h = t.Value(p.id).rows();
      if (Needs(t, p)) t.Grad(p.id) += g.middleRows(r, h);
      r += h;
    }
  });
}

Var SliceCols(Var a, long begin, long count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw ValidationError("SliceCols out of range");
  }
  Tape& t = *a.tape;
  return t.Push(a.value().middleCols(begin, count), {a},
                [a, begin, count](Tape& t, int self) {
                  t.Grad(a.id).middleCols(begin, count) += t.Grad(self);
                });
}

Var SliceRows(Var a, long begin, long count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw ValidationError("SliceRows out of range");
  }
  Tape& t = *a.tape;
  return t.Push(a.value().middleRows(begin, count), {a},
                [a, begin, count](Tape& t, int self) {
                  t.Grad(a.id).middleRows(begin, count) += t.Grad(self);
                });
}

Var GatherRows(Var a, const std::vector<long>& index) {
  const Matrix& v = a.value();
  Matrix out(static_cast<long>(index.size()), v.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= v.rows()) {
      throw ValidationError("GatherRows index out of range");
    }
    out.row(i) = v.row(index[i]);
  }
  Tape& t = *a.tape;
  return t.Push(std::move(out), {a}, [a, index](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    Matrix& ga = t.Grad(a.id);
    for (size_t i = 0; i < index.size(); ++i) ga.row(index[i]) += g.row(i);
  });
}

Var SumSquares(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().squaredNorm();
  Tape& t = *a.tape;
  return t.Push(std::move(out), {a}, [a](Tape& t, int self) {
    t.Grad(a.id) += 2.0 * t.Grad(self)(0, 0) * t.Value(a.id);
  });
}

Var L1Mean(Var pred, const Matrix& target) {
  CheckSameShape(pred.value(), target, "L1Mean");
  if (target.size() == 0) throw ValidationError("L1Mean of empty input");
  Matrix out(1, 1);
  const double count = static_cast<double>(target.size());
  out(0, 0) = (pred.value() - target).cwiseAbs().sum() / count;
  Tape& t = *pred.tape;
  return t.Push(std::move(out), {pred},
                [pred, target, count](Tape& t, int self) {
                  const double g = t.Grad(self)(0, 0) / count;
                  const Matrix diff = t.Value(pred.id) - target;
                  t.Grad(pred.id).array() += g * diff.array().sign();
                });
}

Var Unfold(Var x, int kernel, const std::vector<Segment>& segments) {
  if (kernel < 1) throw ValidationError("Unfold: kernel must be >= 1");
  const Matrix& v = x.value();
  CheckSegments(segments, v.rows(), "Unfold");
  const long c = v.cols();
  const int left = (kernel - 1) / 2;
  Matrix out = Matrix::Zero(v.rows(), kernel * c);
  for (const Segment& s : segments) {
    for (long r = 0; r < s.length; ++r) {
      for (int j = 0; j < kernel; ++j) {
        const long src = r - left + j;
        if (src < 0 || src >= s.length) continue;
        out.block(s.begin + r, j * c, 1, c) = v.row(s.begin + src);
      }
    }
  }
  Tape& t = *x.tape;
  return t.Push(std::move(out), {x},
                [x, kernel, segments, left, c](Tape& t, int self) {
                  const Matrix& g = t.Grad(self);
                  Matrix& gx = t.Grad(x.id);
                  for (const Segment& s : segments) {
                    for (long r = 0; r < s.length; ++r) {
                      for (int j = 0; j < kernel; ++j) {
                        const long src = r - left + j;
                        if (src < 0 || src >= s.length) continue;
                        gx.row(s.begin + src) += g.block(s.begin + r, j * c, 1, c);
                      }
                    }
                  }
                });
}

Var MaxPool2(Var x, const std::vector<Segment>& segments) {
  const Matrix& v = x.value();
  CheckSegments(segments, v.rows(), "MaxPool2");
  Matrix out = v;
  // source[r * cols + c] is the row that won for output (r, c).
  std::vector<long> source(v.size());
  for (long r = 0; r < v.rows(); ++r) {
    for (long c = 0; c < v.cols(); ++c) source[r * v.cols() + c] = r;
  }
  for (const Segment& s : segments) {
    for (long r = 0; r + 1 < s.length; ++r) {
      const long row = s.begin + r;
      for (long c = 0; c < v.cols(); ++c) {
        if (v(row + 1, c) > v(row, c)) {
          out(row, c) = v(row + 1, c);
          source[row * v.cols() + c] = row + 1;
        }
      }
    }
  }
  Tape& t = *x.tape;
  return t.Push(std::move(out), {x}, [x, source](Tape& t, int self) {
    const Matrix& g = t.Grad(self);
    Matrix& gx = t.Grad(x.id);
    const long cols = g.cols();
    for (long r = 0; r < g.rows(); ++r) {
      for (long c = 0; c < cols; ++c) gx(source[r * cols + c], c) += g(r, c);
    }
  });
}

Var BatchNorm(Var x, Var gamma, Var beta, Matrix* running_mean,
              Matrix* running_var, bool training, double momentum,
              double eps) {
  const Matrix& v = x.value();
  const long rows = v.rows();
  if (gamma.cols() != v.cols() || beta.cols() != v.cols()) {
    ShapeError("BatchNorm", v, gamma.value());
  }
  RowVector mean, var;
  if (training) {
    if (rows == 0) throw ValidationError("BatchNorm on empty batch");
    mean = v.colwise().mean();
    var = (v.rowwise() - mean).array().square().colwise().mean().matrix();
    running_mean->row(0) = (1.0 - momentum) * running_mean->row(0) +
                           momentum * mean;
    running_var->row(0) = (1.0 - momentum) * running_var->row(0) +
                          momentum * var;
  } else {
    mean = running_mean->row(0);
    var = running_var->row(0);
  }
  const RowVector inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = (v.rowwise() - mean).array().rowwise() * inv_std.array();
  Matrix out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  Tape& t = *x.tape;
  return t.Push(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std, training](Tape& t, int self) {
        const Matrix& g = t.Grad(self);
        if (Needs(t, gamma)) {
          t.Grad(gamma.id) += g.cwiseProduct(xhat).colwise().sum();
        }
        if (Needs(t, beta)) t.Grad(beta.id) += g.colwise().sum();
        if (!Needs(t, x)) return;
        const Matrix gxhat =
            g.array().rowwise() * t.Value(gamma.id).row(0).array();
        if (!training) {
          t.Grad(x.id).array() += gxhat.array().rowwise() * inv_std.array();
          return;
        }
        const double n = static_cast<double>(g.rows());
        const RowVector sum_g = gxhat.colwise().sum();
        const RowVector sum_gx = gxhat.cwiseProduct(xhat).colwise().sum();
        Matrix gx = (n * gxhat).rowwise() - sum_g;
        gx -= (xhat.array().rowwise() * sum_gx.array()).matrix();
        t.Grad(x.id).array() +=
            (gx.array().rowwise() * (inv_std.array() / n));
      });
}

namespace {

RowVector SigmoidRow(const RowVector& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace

Var GruCell(Var gx, Var h, Var w_hh, Var b_hh) {
  const long hidden = w_hh.rows();
  if (w_hh.cols() != 3 * hidden || gx.cols() != 3 * hidden ||
      h.cols() != hidden || gx.rows() != h.rows()) {
    ShapeError("GruCell", gx.value(), h.value());
  }
  const Matrix& hv = h.value();
  Matrix gh = hv * w_hh.value();
  gh.rowwise() += b_hh.value().row(0);
  const Matrix& gxv = gx.value();
  const auto sig = [](const Matrix& m) {
    return Matrix((1.0 / (1.0 + (-m.array()).exp())).matrix());
  };
  Matrix r = sig(gxv.leftCols(hidden) + gh.leftCols(hidden));
  Matrix z = sig(gxv.middleCols(hidden, hidden) + gh.middleCols(hidden, hidden));
  Matrix ghn = gh.rightCols(hidden);
  Matrix n = (gxv.rightCols(hidden) + r.cwiseProduct(ghn)).array().tanh().matrix();
  Matrix out = (1.0 - z.array()) * n.array() + z.array() * hv.array();
  Tape& t = *gx.tape;
  return t.Push(
      std::move(out), {gx, h, w_hh, b_hh},
      [gx, h, w_hh, b_hh, r, z, n, ghn, hidden](Tape& t, int self) {
        const Matrix& g = t.Grad(self);
        const Matrix& hv = t.Value(h.id);
        const long rows = g.rows();
        Matrix dpre(rows, 3 * hidden);
        const Matrix dn =
            (g.array() * (1.0 - z.array()) * (1.0 - n.array().square()))
                .matrix();
        const Matrix dz = (g.array() * (hv.array() - n.array()) * z.array() *
                           (1.0 - z.array()))
                              .matrix();
        const Matrix dr =
            (dn.array() * ghn.array() * r.array() * (1.0 - r.array())).matrix();
        dpre << dr, dz, dn;
        if (Needs(t, gx)) t.Grad(gx.id) += dpre;
        Matrix dgh = dpre;
        dgh.rightCols(hidden) = dn.cwiseProduct(r);
        if (Needs(t, w_hh)) t.AccumulateProduct(w_hh.id, hv, dgh);
        if (Needs(t, b_hh)) t.Grad(b_hh.id) += dgh.colwise().sum();
        if (Needs(t, h)) {
          Matrix& gh = t.Grad(h.id);
          gh += g.cwiseProduct(z);
          gh.noalias() += dgh * t.Value(w_hh.id).transpose();
        }
      });
}

Var GruSequence(Var gx, Var w_hh, Var b_hh,
                const std::vector<Segment>& segments, bool reverse) {
  const long hidden = w_hh.rows();
  const Matrix& gxv = gx.value();
  if (w_hh.cols() != 3 * hidden || gxv.cols() != 3 * hidden) {
    ShapeError("GruSequence", gxv, w_hh.value());
  }
  CheckSegments(segments, gxv.rows(), "GruSequence");
  const long rows = gxv.rows();
  const Matrix& whh = w_hh.value();
  const RowVector bhh = b_hh.value().row(0);
  Matrix out = Matrix::Zero(rows, hidden);
  Matrix h_prev = Matrix::Zero(rows, hidden);
  Matrix r_all(rows, hidden), z_all(rows, hidden), n_all(rows, hidden),
      ghn_all(rows, hidden);
  for (const Segment& s : segments) {
    RowVector h = RowVector::Zero(hidden);
    for (long k = 0; k < s.length; ++k) {
      const long row = s.begin + (reverse ? s.length - 1 - k : k);
      const RowVector gh = h * whh + bhh;
      const RowVector r =
          SigmoidRow(gxv.row(row).head(hidden) + gh.head(hidden));
      const RowVector z = SigmoidRow(gxv.row(row).segment(hidden, hidden) +
                                     gh.segment(hidden, hidden));
      const RowVector ghn = gh.tail(hidden);
      const RowVector n =
          (gxv.row(row).tail(hidden) + r.cwiseProduct(ghn)).array().tanh().matrix();
      h_prev.row(row) = h;
      h = ((1.0 - z.array()) * n.array() + z.array() * h.array()).matrix();
      out.row(row) = h;
      r_all.row(row) = r;
      z_all.row(row) = z;
      n_all.row(row) = n;
      ghn_all.row(row) = ghn;
    }
  }
  Tape& t = *gx.tape;
  return t.Push(
      std::move(out), {gx, w_hh, b_hh},
      [gx, w_hh, b_hh, segments, reverse, hidden, h_prev, r_all, z_all, n_all,
       ghn_all](Tape& t, int self) {
        const Matrix& g = t.Grad(self);
        const Matrix& whh = t.Value(w_hh.id);
        const long rows = g.rows();
        Matrix dpre = Matrix::Zero(rows, 3 * hidden);
        Matrix dgh = Matrix::Zero(rows, 3 * hidden);
        for (const Segment& s : segments) {
          RowVector carry = RowVector::Zero(hidden);
          for (long k = s.length - 1; k >= 0; --k) {
            const long row = s.begin + (reverse ? s.length - 1 - k : k);
            const RowVector dh = g.row(row) + carry;
            const auto z = z_all.row(row).array();
            const auto n = n_all.row(row).array();
            const auto r = r_all.row(row).array();
            const RowVector dn =
                (dh.array() * (1.0 - z) * (1.0 - n.square())).matrix();
            const RowVector dz =
                (dh.array() * (h_prev.row(row).array() - n) * z * (1.0 - z))
                    .matrix();
            const RowVector dr =
                (dn.array() * ghn_all.row(row).array() * r * (1.0 - r))
                    .matrix();
            dpre.row(row) << dr, dz, dn;
            dgh.row(row) << dr, dz, dn.cwiseProduct(r_all.row(row));
            carry = (dh.array() * z).matrix() +
                    dgh.row(row) * whh.transpose();
          }
        }
        if (Needs(t, gx)) t.Grad(gx.id) += dpre;
        if (Needs(t, w_hh)) {
          t.Grad(w_hh.id).noalias() += h_prev.transpose() * dgh;
        }
        if (Needs(t, b_hh)) t.Grad(b_hh.id) += dgh.colwise().sum();
      });
}

Var LocalAttentionStep(Var query_proj, Var key_proj, Var values, Var v,
                       Var offset_bias,
                       const std::vector<Segment>& sequences, long t_frame,
                       int window, std::vector<AttentionWindow>* windows) {
  const Matrix& q = query_proj.value();
  const Matrix& k = key_proj.value();
  const Matrix& vals = values.value();
  const RowVector vv = v.value().row(0);
  const Matrix& bias = offset_bias.value();
  const long batch = static_cast<long>(sequences.size());
  if (q.rows() != batch || q.cols() != k.cols() || vv.size() != k.cols() ||
      k.rows() != vals.rows()) {
    ShapeError("LocalAttentionStep", q, k);
  }
  if (bias.rows() != 1 || bias.cols() != 2L * window + 1) {
    ShapeError("LocalAttentionStep offset bias", bias, k);
  }
  CheckSegments(sequences, k.rows(), "LocalAttentionStep");
  struct Cache {
    long lo = 0;
    Matrix u;       // window x A, tanh activations
    Vector alpha;   // window weights
  };
  std::vector<Cache> cache(batch);
  if (windows != nullptr) windows->clear();
  Matrix out = Matrix::Zero(batch, vals.cols());
  for (long b = 0; b < batch; ++b) {
    const Segment& s = sequences[b];
    if (t_frame < 0 || t_frame >= s.length) {
      throw ValidationError("LocalAttentionStep: frame outside sequence");
    }
    const long lo = std::max(0L, t_frame - window);
    const long hi = std::min(s.length, t_frame + window + 1);
    Matrix u = k.middleRows(s.begin + lo, hi - lo);
    u.rowwise() += q.row(b);
    u = u.array().tanh().matrix();
    Vector score = u * vv.transpose();
    score += bias.row(0).segment(lo - t_frame + window, hi - lo).transpose();
    const double peak = score.maxCoeff();
    Vector alpha = (score.array() - peak).exp().matrix();
    alpha /= alpha.sum();
    out.row(b) = alpha.transpose() * vals.middleRows(s.begin + lo, hi - lo);
    if (windows != nullptr) windows->push_back({lo, alpha});
    cache[b] = Cache{lo, std::move(u), std::move(alpha)};
  }
  Tape& t = *query_proj.tape;
  return t.Push(
      std::move(out), {query_proj, key_proj, values, v, offset_bias},
      [query_proj, key_proj, values, v, offset_bias, sequences, cache,
       t_frame, window](Tape& t, int self) {
        const Matrix& g = t.Grad(self);
        const Matrix& vals = t.Value(values.id);
        const RowVector vv = t.Value(v.id).row(0);
        const bool need_q = Needs(t, query_proj), need_k = Needs(t, key_proj),
                   need_vals = Needs(t, values), need_v = Needs(t, v),
                   need_bias = Needs(t, offset_bias);
        for (size_t b = 0; b < sequences.size(); ++b) {
          const Cache& c = cache[b];
          const long n = c.alpha.size();
          const long base = sequences[b].begin + c.lo;
          const auto window_vals = vals.middleRows(base, n);
          if (need_vals) {
            t.Grad(values.id).middleRows(base, n).noalias() +=
                c.alpha * g.row(b);
          }
          const Vector dalpha = window_vals * g.row(b).transpose();
          const double mix = c.alpha.dot(dalpha);
          const Vector dscore =
              c.alpha.cwiseProduct((dalpha.array() - mix).matrix());
          if (need_v) t.Grad(v.id).noalias() += dscore.transpose() * c.u;
          if (need_bias) {
            t.Grad(offset_bias.id)
                .row(0)
                .segment(c.lo - t_frame + window, n) += dscore.transpose();
          }
          const Matrix dpre =
              ((dscore * vv).array() * (1.0 - c.u.array().square())).matrix();
          if (need_q) t.Grad(query_proj.id).row(b) += dpre.colwise().sum();
          if (need_k) t.Grad(key_proj.id).middleRows(base, n) += dpre;
        }
      });
}

Var CollectSteps(const std::vector<Var>& steps, long row, int frames_per_step,
                 long length) {
  if (steps.empty()) throw ValidationError("CollectSteps: no steps");
  const long width = steps[0].cols() / frames_per_step;
  if (static_cast<long>(steps.size()) * frames_per_step < length) {
    throw ValidationError("CollectSteps: too few steps for length");
  }
  Matrix out(length, width);
  for (size_t k = 0; k < steps.size(); ++k) {
    const Matrix& s = steps[k].value();
    if (row >= s.rows()) throw ValidationError("CollectSteps: row inactive");
    for (int f = 0; f < frames_per_step; ++f) {
      const long frame = static_cast<long>(k) * frames_per_step + f;
      if (frame >= length) break;
      out.row(frame) = s.block(row, f * width, 1, width);
    }
  }
  Tape& t = *steps[0].tape;
  return t.Push(std::move(out), steps,
                [steps, row, frames_per_step, width](Tape& t, int self) {
                  const Matrix& g = t.Grad(self);
                  for (size_t k = 0; k < steps.size(); ++k) {
                    if (!Needs(t, steps[k])) continue;
                    Matrix& gs = t.Grad(steps[k].id);
                    for (int f = 0; f < frames_per_step; ++f) {
                      const long frame =
                          static_cast<long>(k) * frames_per_step + f;
                      if (frame >= g.rows()) break;
                      gs.block(row, f * width, 1, width) += g.row(frame);
                    }
                  }
                });
}

}  // namespace singvc::ad
