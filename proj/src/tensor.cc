// duallab/tensor.cc

// Copyright 2026  DualLab authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "duallab/tensor.h"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace duallab {

namespace {

std::atomic<uint64_t> next_record_id{1};
thread_local ComputationRecord *active_record = nullptr;

size_t Product(const Shape &shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

void RequireMatrix(const Tensor &t, const char *op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                     ShapeString(t.shape()));
}

void RequireSameShape(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     ShapeString(a.shape()) + " vs " + ShapeString(b.shape()));
}

// Checks the output and records the node when an active record tracks one of
// the inputs.
Tensor Finish(OpKind kind, std::vector<Tensor> inputs, Tensor output,
              OpAttrs attrs = {}) {
  for (double v : output.data()) {
    if (!std::isfinite(v))
      throw NumericError(std::string(OpName(kind)) + ": non-finite output");
  }
  ComputationRecord *record = active_record;
  if (record == nullptr) return output;
  bool any_tracked = false;
  for (const Tensor &in : inputs) {
    if (!in.tracked()) continue;
    if (in.record_id() != record->id())
      throw Error(std::string(OpName(kind)) +
                  ": input belongs to a different computation record");
    any_tracked = true;
  }
  if (!any_tracked) return output;
  return record->Record(kind, std::move(inputs), std::move(output),
                        std::move(attrs));
}

double SigmoidScalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// c[m x n] += a[m x k] * b[k x n]
void GemmNN(const double *a, const double *b, double *c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double *crow = c + static_cast<size_t>(i) * n;
    const double *arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      const double *brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += g[m x n] * b[k x n]^T
void GemmNT(const double *g, const double *b, double *c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double *grow = g + static_cast<size_t>(i) * n;
    double *crow = c + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double *brow = b + static_cast<size_t>(p) * n;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        s0 += grow[j] * brow[j];
        s1 += grow[j + 1] * brow[j + 1];
        s2 += grow[j + 2] * brow[j + 2];
        s3 += grow[j + 3] * brow[j + 3];
      }
      for (; j < n; ++j) s0 += grow[j] * brow[j];
      crow[p] += (s0 + s1) + (s2 + s3);
    }
  }
}

// c[k x n] += a[m x k]^T * g[m x n]
void GemmTN(const double *a, const double *g, double *c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double *arow = a + static_cast<size_t>(i) * k;
    const double *grow = g + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = arow[p];
      if (av == 0.0) continue;
      double *crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * grow[j];
    }
  }
}

}  // namespace

std::string ShapeString(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

const char *OpName(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMulElementwise: return "mul_elementwise";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kConcatLastAxis: return "concat_last_axis";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kSlice: return "slice";
    case OpKind::kLogSoftmaxLastAxis: return "log_softmax_last_axis";
    case OpKind::kSoftmaxLastAxis: return "softmax_last_axis";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kL1Distance: return "l1_distance";
    case OpKind::kAddRow: return "add_row";
    case OpKind::kScale: return "scale";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kUnfold: return "unfold";
    case OpKind::kBceWithLogits: return "bce_with_logits";
    case OpKind::kExternalScalar: return "external_scalar";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  for (int d : shape_) {
    if (d <= 0)
      throw ShapeError("tensor dimensions must be positive, got " +
                       ShapeString(shape_));
  }
  if (Product(shape_) != data.size())
    throw ShapeError("tensor shape " + ShapeString(shape_) + " does not match " +
                     std::to_string(data.size()) + " values");
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::Zeros(Shape shape) { return Filled(std::move(shape), 0.0); }

Tensor Tensor::Filled(Shape shape, double value) {
  size_t n = Product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::Matrix(int rows, int cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

Tensor Tensor::Scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::Row(std::vector<double> data) {
  int n = static_cast<int>(data.size());
  return Tensor({1, n}, std::move(data));
}

int Tensor::rows() const { return shape_.empty() ? 0 : shape_[0]; }

int Tensor::cols() const {
  if (shape_.size() < 2) return shape_.empty() ? 0 : 1;
  return shape_[1];
}

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::at(int r, int c) const {
  return (*data_)[static_cast<size_t>(r) * cols() + c];
}

double Tensor::item() const {
  if (size() != 1)
    throw ShapeError("item() on tensor of shape " + ShapeString(shape_));
  return (*data_)[0];
}

Tensor Tensor::Detach() const {
  Tensor t = *this;
  t.node_ = -1;
  t.record_id_ = 0;
  return t;
}

// ---------------------------------------------------------------------------
// ComputationRecord

ComputationRecord::ComputationRecord() : id_(next_record_id.fetch_add(1)) {}

Tensor ComputationRecord::Leaf(const Tensor &value) {
  if (backward_done_)
    throw Error("cannot add leaves after backward without reset");
  return Record(OpKind::kLeaf, {}, value.Detach(), {});
}

Tensor ComputationRecord::Record(OpKind kind, std::vector<Tensor> inputs,
                                 Tensor output, OpAttrs attrs) {
  output.node_ = static_cast<int>(nodes_.size());
  output.record_id_ = id_;
  nodes_.push_back(Node{kind, std::move(inputs), output.Detach(),
                        std::move(attrs)});
  return output;
}

void ComputationRecord::Reset() {
  nodes_.clear();
  grads_.clear();
  backward_done_ = false;
  id_ = next_record_id.fetch_add(1);
}

std::vector<double> &ComputationRecord::GradSlot(int node) {
  std::vector<double> &slot = grads_[node];
  if (slot.empty()) slot.assign(nodes_[node].output.size(), 0.0);
  return slot;
}

std::span<const double> ComputationRecord::GradData(int node) const {
  if (node < 0 || static_cast<size_t>(node) >= grads_.size()) return {};
  return grads_[node];
}

Tensor ComputationRecord::Grad(const Tensor &t) const {
  if (!t.tracked() || t.record_id() != id_ || !backward_done_ ||
      grads_[t.node()].empty())
    return Tensor::Zeros(t.shape());
  return Tensor(t.shape(), grads_[t.node()]);
}

void ComputationRecord::Backward(const Tensor &loss) {
  if (backward_done_)
    throw Error("backward called twice on the same record without reset");
  if (loss.size() != 1)
    throw ShapeError("backward expects a scalar loss, got " +
                     ShapeString(loss.shape()));
  backward_done_ = true;
  grads_.assign(nodes_.size(), {});
  if (!loss.tracked() || loss.record_id() != id_) return;
  GradSlot(loss.node())[0] = 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    if (grads_[i].empty()) continue;
    Propagate(nodes_[i], grads_[i]);
  }
}

void ComputationRecord::Propagate(const Node &node,
                                  std::span<const double> g) {
  const auto &in = node.inputs;
  auto slot = [&](size_t k) -> double * {
    if (k >= in.size() || !in[k].tracked()) return nullptr;
    return GradSlot(in[k].node()).data();
  };
  const std::vector<double> &y = *node.output.data_;
  switch (node.kind) {
    case OpKind::kLeaf:
      return;
    case OpKind::kAdd:
    case OpKind::kSub: {
      double sign = node.kind == OpKind::kAdd ? 1.0 : -1.0;
      if (double *ga = slot(0))
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (double *gb = slot(1))
        for (size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
      return;
    }
    case OpKind::kMulElementwise: {
      const auto a = in[0].data(), b = in[1].data();
      if (double *ga = slot(0))
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      if (double *gb = slot(1))
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      return;
    }
    case OpKind::kMatmul: {
      int m = in[0].rows(), k = in[0].cols(), n = in[1].cols();
      if (double *ga = slot(0)) GemmNT(g.data(), in[1].data().data(), ga, m, n, k);
      if (double *gb = slot(1)) GemmTN(in[0].data().data(), g.data(), gb, m, k, n);
      return;
    }
    case OpKind::kTanh:
      if (double *gx = slot(0))
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
      return;
    case OpKind::kSigmoid:
      if (double *gx = slot(0))
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    case OpKind::kRelu: {
      const auto x = in[0].data();
      if (double *gx = slot(0))
        for (size_t i = 0; i < g.size(); ++i)
          if (x[i] > 0) gx[i] += g[i];
      return;
    }
    case OpKind::kConcatLastAxis: {
      int rows = node.output.rows(), total = node.output.cols(), offset = 0;
      for (size_t p = 0; p < in.size(); ++p) {
        int c = in[p].cols();
        if (double *gp = slot(p)) {
          for (int r = 0; r < rows; ++r)
            for (int j = 0; j < c; ++j)
              gp[static_cast<size_t>(r) * c + j] +=
                  g[static_cast<size_t>(r) * total + offset + j];
        }
        offset += c;
      }
      return;
    }
    case OpKind::kConcatRows: {
      size_t offset = 0;
      for (size_t p = 0; p < in.size(); ++p) {
        size_t n = in[p].size();
        if (double *gp = slot(p))
          for (size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
        offset += n;
      }
      return;
    }
    case OpKind::kSlice: {
      double *gx = slot(0);
      if (!gx) return;
      int cols = in[0].cols();
      if (node.attrs.axis == 0) {
        size_t base = static_cast<size_t>(node.attrs.begin) * cols;
        for (size_t i = 0; i < g.size(); ++i) gx[base + i] += g[i];
      } else {
        int width = node.attrs.end - node.attrs.begin;
        for (int r = 0; r < in[0].rows(); ++r)
          for (int j = 0; j < width; ++j)
            gx[static_cast<size_t>(r) * cols + node.attrs.begin + j] +=
                g[static_cast<size_t>(r) * width + j];
      }
      return;
    }
    case OpKind::kLogSoftmaxLastAxis: {
      double *gx = slot(0);
      if (!gx) return;
      int rows = node.output.rows(), cols = node.output.cols();
      for (int r = 0; r < rows; ++r) {
        size_t base = static_cast<size_t>(r) * cols;
        double gs = 0.0;
        for (int j = 0; j < cols; ++j) gs += g[base + j];
        for (int j = 0; j < cols; ++j)
          gx[base + j] += g[base + j] - std::exp(y[base + j]) * gs;
      }
      return;
    }
    case OpKind::kSoftmaxLastAxis: {
      double *gx = slot(0);
      if (!gx) return;
      int rows = node.output.rows(), cols = node.output.cols();
      for (int r = 0; r < rows; ++r) {
        size_t base = static_cast<size_t>(r) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += g[base + j] * y[base + j];
        for (int j = 0; j < cols; ++j)
          gx[base + j] += y[base + j] * (g[base + j] - dot);
      }
      return;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      double *gx = slot(0);
      if (!gx) return;
      size_t n = in[0].size();
      double v = node.kind == OpKind::kSum ? g[0] : g[0] / static_cast<double>(n);
      for (size_t i = 0; i < n; ++i) gx[i] += v;
      return;
    }
    case OpKind::kL1Distance: {
      const auto a = in[0].data(), b = in[1].data();
      double *ga = slot(0), *gb = slot(1);
      for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        double s = d > 0 ? g[0] : (d < 0 ? -g[0] : 0.0);
        if (ga) ga[i] += s;
        if (gb) gb[i] -= s;
      }
      return;
    }
    case OpKind::kAddRow: {
      int rows = node.output.rows(), cols = node.output.cols();
      if (double *gx = slot(0))
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      if (double *gb = slot(1))
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < cols; ++j)
            gb[j] += g[static_cast<size_t>(r) * cols + j];
      return;
    }
    case OpKind::kScale:
      if (double *gx = slot(0))
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * node.attrs.scale;
      return;
    case OpKind::kTranspose: {
      double *gx = slot(0);
      if (!gx) return;
      int rows = in[0].rows(), cols = in[0].cols();
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          gx[static_cast<size_t>(r) * cols + c] += g[static_cast<size_t>(c) * rows + r];
      return;
    }
    case OpKind::kGatherRows: {
      double *gx = slot(0);
      if (!gx) return;
      int cols = in[0].cols();
      const auto &idx = *node.attrs.indices;
      for (size_t k = 0; k < idx.size(); ++k)
        for (int j = 0; j < cols; ++j)
          gx[static_cast<size_t>(idx[k]) * cols + j] +=
              g[k * static_cast<size_t>(cols) + j];
      return;
    }
    case OpKind::kUnfold: {
      double *gx = slot(0);
      if (!gx) return;
      int rows = in[0].rows(), c = in[0].cols(), width = node.attrs.begin;
      int half = width / 2, out_cols = width * c;
      for (int k = 0; k < rows; ++k)
        for (int t = 0; t < width; ++t) {
          int src = k + t - half;
          if (src < 0 || src >= rows) continue;
          for (int j = 0; j < c; ++j)
            gx[static_cast<size_t>(src) * c + j] +=
                g[static_cast<size_t>(k) * out_cols + t * c + j];
        }
      return;
    }
    case OpKind::kBceWithLogits: {
      const auto x = in[0].data(), t = in[1].data();
      double *gx = slot(0), *gt = slot(1);
      for (size_t i = 0; i < x.size(); ++i) {
        if (gx) gx[i] += g[0] * (SigmoidScalar(x[i]) - t[i]);
        if (gt) gt[i] -= g[0] * x[i];
      }
      return;
    }
    case OpKind::kExternalScalar: {
      double *gx = slot(0);
      if (!gx) return;
      const auto &lg = *node.attrs.local_grad;
      for (size_t i = 0; i < lg.size(); ++i) gx[i] += g[0] * lg[i];
      return;
    }
  }
}

ComputationRecord *ActiveRecord() { return active_record; }

RecordScope::RecordScope(ComputationRecord *record) : previous_(active_record) {
  active_record = record;
}

RecordScope::~RecordScope() { active_record = previous_; }

// ---------------------------------------------------------------------------
// Ops

Tensor Add(const Tensor &a, const Tensor &b) {
  RequireSameShape(a, b, "add");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Finish(OpKind::kAdd, {a, b}, Tensor(a.shape(), std::move(out)));
}

Tensor Sub(const Tensor &a, const Tensor &b) {
  RequireSameShape(a, b, "sub");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return Finish(OpKind::kSub, {a, b}, Tensor(a.shape(), std::move(out)));
}

Tensor Mul(const Tensor &a, const Tensor &b) {
  RequireSameShape(a, b, "mul_elementwise");
  std::vector<double> out(a.size());
  auto x = a.data(), y = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return Finish(OpKind::kMulElementwise, {a, b},
                Tensor(a.shape(), std::move(out)));
}

Tensor Matmul(const Tensor &a, const Tensor &b) {
  RequireMatrix(a, "matmul");
  RequireMatrix(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ " + ShapeString(a.shape()) +
                     " x " + ShapeString(b.shape()));
  int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  GemmNN(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Finish(OpKind::kMatmul, {a, b}, Tensor::Matrix(m, n, std::move(out)));
}

namespace {

template <typename F>
Tensor Unary(OpKind kind, const Tensor &x, F f) {
  std::vector<double> out(x.size());
  auto v = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
  return Finish(kind, {x}, Tensor(x.shape(), std::move(out)));
}

}  // namespace

Tensor Tanh(const Tensor &x) {
  return Unary(OpKind::kTanh, x, [](double v) { return std::tanh(v); });
}

Tensor Sigmoid(const Tensor &x) {
  return Unary(OpKind::kSigmoid, x, [](double v) { return SigmoidScalar(v); });
}

Tensor Relu(const Tensor &x) {
  return Unary(OpKind::kRelu, x, [](double v) { return v > 0 ? v : 0.0; });
}

Tensor ConcatLastAxis(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_last_axis: no inputs");
  int rows = parts[0].rows(), total = 0;
  for (const Tensor &p : parts) {
    RequireMatrix(p, "concat_last_axis");
    if (p.rows() != rows)
      throw ShapeError("concat_last_axis: row counts differ");
    total += p.cols();
  }
  std::vector<double> out(static_cast<size_t>(rows) * total);
  int offset = 0;
  for (const Tensor &p : parts) {
    int c = p.cols();
    auto d = p.data();
    for (int r = 0; r < rows; ++r)
      std::copy_n(d.data() + static_cast<size_t>(r) * c, c,
                  out.data() + static_cast<size_t>(r) * total + offset);
    offset += c;
  }
  return Finish(OpKind::kConcatLastAxis, {parts.begin(), parts.end()},
                Tensor::Matrix(rows, total, std::move(out)));
}

Tensor ConcatRows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  int cols = parts[0].cols(), rows = 0;
  for (const Tensor &p : parts) {
    RequireMatrix(p, "concat_rows");
    if (p.cols() != cols) throw ShapeError("concat_rows: column counts differ");
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows) * cols);
  for (const Tensor &p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Finish(OpKind::kConcatRows, {parts.begin(), parts.end()},
                Tensor::Matrix(rows, cols, std::move(out)));
}

Tensor Slice(const Tensor &x, int axis, int begin, int end) {
  RequireMatrix(x, "slice");
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  int extent = axis == 0 ? x.rows() : x.cols();
  if (begin < 0 || end > extent || begin >= end)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " +
                     ShapeString(x.shape()));
  int rows = x.rows(), cols = x.cols();
  auto d = x.data();
  std::vector<double> out;
  Shape shape;
  if (axis == 0) {
    out.assign(d.begin() + static_cast<size_t>(begin) * cols,
               d.begin() + static_cast<size_t>(end) * cols);
    shape = {end - begin, cols};
  } else {
    int width = end - begin;
    out.resize(static_cast<size_t>(rows) * width);
    for (int r = 0; r < rows; ++r)
      std::copy_n(d.data() + static_cast<size_t>(r) * cols + begin, width,
                  out.data() + static_cast<size_t>(r) * width);
    shape = {rows, width};
  }
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.begin = begin;
  attrs.end = end;
  return Finish(OpKind::kSlice, {x}, Tensor(std::move(shape), std::move(out)),
                std::move(attrs));
}

Tensor LogSoftmax(const Tensor &x) {
  RequireMatrix(x, "log_softmax_last_axis");
  int rows = x.rows(), cols = x.cols();
  auto d = x.data();
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r) {
    const double *row = d.data() + static_cast<size_t>(r) * cols;
    double m = *std::max_element(row, row + cols);
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += std::exp(row[j] - m);
    double lse = m + std::log(s);
    for (int j = 0; j < cols; ++j) out[static_cast<size_t>(r) * cols + j] = row[j] - lse;
  }
  return Finish(OpKind::kLogSoftmaxLastAxis, {x}, Tensor(x.shape(), std::move(out)));
}

Tensor Softmax(const Tensor &x) {
  RequireMatrix(x, "softmax_last_axis");
  int rows = x.rows(), cols = x.cols();
  auto d = x.data();
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r) {
    const double *row = d.data() + static_cast<size_t>(r) * cols;
    double *o = out.data() + static_cast<size_t>(r) * cols;
    double m = *std::max_element(row, row + cols);
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += (o[j] = std::exp(row[j] - m));
    for (int j = 0; j < cols; ++j) o[j] /= s;
  }
  return Finish(OpKind::kSoftmaxLastAxis, {x}, Tensor(x.shape(), std::move(out)));
}

Tensor Sum(const Tensor &x) {
  auto d = x.data();
  double s = std::accumulate(d.begin(), d.end(), 0.0);
  return Finish(OpKind::kSum, {x}, Tensor::Scalar(s));
}

Tensor Mean(const Tensor &x) {
  auto d = x.data();
  double s = std::accumulate(d.begin(), d.end(), 0.0);
  return Finish(OpKind::kMean, {x}, Tensor::Scalar(s / static_cast<double>(d.size())));
}

Tensor L1Distance(const Tensor &a, const Tensor &b) {
  RequireSameShape(a, b, "l1_distance");
  auto x = a.data(), y = b.data();
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return Finish(OpKind::kL1Distance, {a, b}, Tensor::Scalar(s));
}

Tensor AddRow(const Tensor &x, const Tensor &b) {
  RequireMatrix(x, "add_row");
  RequireMatrix(b, "add_row");
  if (b.rows() != 1 || b.cols() != x.cols())
    throw ShapeError("add_row: bias " + ShapeString(b.shape()) +
                     " does not fit " + ShapeString(x.shape()));
  int rows = x.rows(), cols = x.cols();
  auto d = x.data(), bv = b.data();
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j)
      out[static_cast<size_t>(r) * cols + j] = d[static_cast<size_t>(r) * cols + j] + bv[j];
  return Finish(OpKind::kAddRow, {x, b}, Tensor(x.shape(), std::move(out)));
}

Tensor Scale(const Tensor &x, double factor) {
  std::vector<double> out(x.size());
  auto d = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = d[i] * factor;
  OpAttrs attrs;
  attrs.scale = factor;
  return Finish(OpKind::kScale, {x}, Tensor(x.shape(), std::move(out)),
                std::move(attrs));
}

Tensor Transpose(const Tensor &x) {
  RequireMatrix(x, "transpose");
  int rows = x.rows(), cols = x.cols();
  auto d = x.data();
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<size_t>(c) * rows + r] = d[static_cast<size_t>(r) * cols + c];
  return Finish(OpKind::kTranspose, {x}, Tensor::Matrix(cols, rows, std::move(out)));
}

Tensor GatherRows(const Tensor &table, std::span<const int> indices) {
  RequireMatrix(table, "gather_rows");
  if (indices.empty()) throw ShapeError("gather_rows: no indices");
  int cols = table.cols();
  auto d = table.data();
  std::vector<double> out;
  out.reserve(indices.size() * cols);
  for (int i : indices) {
    if (i < 0 || i >= table.rows())
      throw ShapeError("gather_rows: index " + std::to_string(i) +
                       " out of range");
    out.insert(out.end(), d.begin() + static_cast<size_t>(i) * cols,
               d.begin() + static_cast<size_t>(i + 1) * cols);
  }
  OpAttrs attrs;
  attrs.indices = std::make_shared<const std::vector<int>>(indices.begin(), indices.end());
  return Finish(OpKind::kGatherRows, {table},
                Tensor::Matrix(static_cast<int>(indices.size()), cols, std::move(out)),
                std::move(attrs));
}

Tensor Unfold(const Tensor &x, int width) {
  RequireMatrix(x, "unfold");
  if (width <= 0 || width % 2 == 0)
    throw ShapeError("unfold: width must be odd and positive, got " +
                     std::to_string(width));
  int rows = x.rows(), c = x.cols(), half = width / 2, out_cols = width * c;
  auto d = x.data();
  std::vector<double> out(static_cast<size_t>(rows) * out_cols, 0.0);
  for (int k = 0; k < rows; ++k)
    for (int t = 0; t < width; ++t) {
      int src = k + t - half;
      if (src < 0 || src >= rows) continue;
      std::copy_n(d.data() + static_cast<size_t>(src) * c, c,
                  out.data() + static_cast<size_t>(k) * out_cols + t * c);
    }
  OpAttrs attrs;
  attrs.begin = width;
  return Finish(OpKind::kUnfold, {x}, Tensor::Matrix(rows, out_cols, std::move(out)),
                std::move(attrs));
}

Tensor BceWithLogits(const Tensor &logits, const Tensor &targets) {
  RequireSameShape(logits, targets, "bce_with_logits");
  auto x = logits.data(), t = targets.data();
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    // max(x,0) - x*t + log(1 + exp(-|x|))
    s += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  return Finish(OpKind::kBceWithLogits, {logits, targets}, Tensor::Scalar(s));
}

Tensor ExternalScalar(const Tensor &x, double value,
                      std::vector<double> local_grad) {
  if (local_grad.size() != x.size())
    throw ShapeError("external_scalar: gradient size mismatch");
  OpAttrs attrs;
  attrs.local_grad = std::make_shared<const std::vector<double>>(std::move(local_grad));
  return Finish(OpKind::kExternalScalar, {x}, Tensor::Scalar(value), std::move(attrs));
}

Tensor Apply(OpKind kind, std::span<const Tensor> in, const OpAttrs &attrs) {
  auto need = [&](size_t n) {
    if (in.size() != n)
      throw ShapeError(std::string(OpName(kind)) + ": expected " +
                       std::to_string(n) + " inputs");
  };
  switch (kind) {
    case OpKind::kAdd: need(2); return Add(in[0], in[1]);
    case OpKind::kSub: need(2); return Sub(in[0], in[1]);
    case OpKind::kMulElementwise: need(2); return Mul(in[0], in[1]);
    case OpKind::kMatmul: need(2); return Matmul(in[0], in[1]);
    case OpKind::kTanh: need(1); return Tanh(in[0]);
    case OpKind::kSigmoid: need(1); return Sigmoid(in[0]);
    case OpKind::kRelu: need(1); return Relu(in[0]);
    case OpKind::kConcatLastAxis: return ConcatLastAxis(in);
    case OpKind::kConcatRows: return ConcatRows(in);
    case OpKind::kSlice: need(1); return Slice(in[0], attrs.axis, attrs.begin, attrs.end);
    case OpKind::kLogSoftmaxLastAxis: need(1); return LogSoftmax(in[0]);
    case OpKind::kSoftmaxLastAxis: need(1); return Softmax(in[0]);
    case OpKind::kSum: need(1); return Sum(in[0]);
    case OpKind::kMean: need(1); return Mean(in[0]);
    case OpKind::kL1Distance: need(2); return L1Distance(in[0], in[1]);
    case OpKind::kAddRow: need(2); return AddRow(in[0], in[1]);
    case OpKind::kScale: need(1); return Scale(in[0], attrs.scale);
    case OpKind::kTranspose: need(1); return Transpose(in[0]);
    case OpKind::kGatherRows:
      need(1);
      if (!attrs.indices) throw ShapeError("gather_rows: missing indices");
      return GatherRows(in[0], *attrs.indices);
    case OpKind::kUnfold: need(1); return Unfold(in[0], attrs.begin);
    case OpKind::kBceWithLogits: need(2); return BceWithLogits(in[0], in[1]);
    case OpKind::kExternalScalar:
      need(1);
      if (!attrs.local_grad) throw ShapeError("external_scalar: missing gradient");
      return ExternalScalar(in[0], attrs.scale, *attrs.local_grad);
    case OpKind::kLeaf: break;
  }
  throw Error(std::string("apply: unsupported op ") + OpName(kind));
}

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::Add(const std::string &name, Tensor value) {
  if (Contains(name)) throw Error("duplicate parameter name: " + name);
  size_t n = value.size();
  params_.push_back(Parameter{name, value.Detach(), std::vector<double>(n, 0.0)});
  return static_cast<int>(params_.size()) - 1;
}

int ParamStore::Find(const std::string &name) const {
  for (size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return static_cast<int>(i);
  return -1;
}

size_t ParamStore::num_scalars() const {
  size_t n = 0;
  for (const auto &p : params_) n += p.value.size();
  return n;
}

void ParamStore::SetValue(int id, Tensor value) {
  if (value.shape() != params_[id].value.shape())
    throw ShapeError("parameter " + params_[id].name + ": shape mismatch");
  params_[id].value = value.Detach();
}

BoundParams ParamStore::Bind(ComputationRecord *record) const {
  std::vector<Tensor> bound;
  bound.reserve(params_.size());
  for (const auto &p : params_)
    bound.push_back(record ? record->Leaf(p.value) : p.value);
  return BoundParams(std::move(bound));
}

GradBuffer ParamStore::CollectGrads(const ComputationRecord &record,
                                    const BoundParams &bound) const {
  GradBuffer out(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    auto g = record.GradData(bound[static_cast<int>(i)].node());
    if (g.empty())
      out[i].assign(params_[i].value.size(), 0.0);
    else
      out[i].assign(g.begin(), g.end());
  }
  return out;
}

GradBuffer ParamStore::ZeroGradBuffer() const {
  GradBuffer out(params_.size());
  for (size_t i = 0; i < params_.size(); ++i)
    out[i].assign(params_[i].value.size(), 0.0);
  return out;
}

void ParamStore::AddGrads(const GradBuffer &buffer, double weight) {
  if (buffer.size() != params_.size()) throw Error("gradient buffer size mismatch");
  for (size_t i = 0; i < params_.size(); ++i)
    for (size_t j = 0; j < buffer[i].size(); ++j)
      params_[i].grad[j] += weight * buffer[i][j];
}

void ParamStore::ZeroGrad() {
  for (auto &p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

double ParamStore::GradNorm() const {
  double s = 0.0;
  for (const auto &p : params_)
    for (double g : p.grad) s += g * g;
  return std::sqrt(s);
}

namespace {

void WriteLittleEndian(std::ostream &os, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char *>(bytes), 8);
}

double ReadLittleEndian(const unsigned char *bytes) {
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void ParamStore::Save(const std::filesystem::path &bin,
                      const std::filesystem::path &index) const {
  std::ofstream data(bin, std::ios::binary);
  std::ofstream idx(index);
  if (!data || !idx) throw Error("cannot write parameters to " + bin.string());
  size_t offset = 0;
  for (const auto &p : params_) {
    idx << p.name << ' ' << offset;
    for (int d : p.value.shape()) idx << ' ' << d;
    idx << '\n';
    for (double v : p.value.data()) WriteLittleEndian(data, v);
    offset += p.value.size();
  }
  if (!data || !idx) throw Error("failed writing parameters to " + bin.string());
}

void ParamStore::Load(const std::filesystem::path &bin,
                      const std::filesystem::path &index) {
  std::ifstream data(bin, std::ios::binary);
  std::ifstream idx(index);
  if (!data || !idx) throw Error("cannot read parameters from " + bin.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(data)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() % 8 != 0) throw Error("parameter file size is not a multiple of 8");
  size_t total = raw.size() / 8;
  std::vector<bool> seen(params_.size(), false);
  std::string line;
  while (std::getline(idx, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    size_t offset;
    if (!(ls >> name >> offset)) throw Error("malformed index line: " + line);
    Shape shape;
    int d;
    while (ls >> d) shape.push_back(d);
    int id = Find(name);
    if (id < 0) throw Error("checkpoint has unknown parameter " + name);
    if (shape != params_[id].value.shape())
      throw ShapeError("parameter " + name + ": checkpoint shape " +
                       ShapeString(shape) + " vs model " +
                       ShapeString(params_[id].value.shape()));
    size_t n = params_[id].value.size();
    if (offset + n > total) throw Error("parameter " + name + " runs past end of file");
    std::vector<double> values(n);
    for (size_t i = 0; i < n; ++i) values[i] = ReadLittleEndian(&raw[(offset + i) * 8]);
    params_[id].value = Tensor(shape, std::move(values));
    seen[id] = true;
  }
  for (size_t i = 0; i < params_.size(); ++i)
    if (!seen[i]) throw Error("checkpoint is missing parameter " + params_[i].name);
}

}  // namespace duallab
