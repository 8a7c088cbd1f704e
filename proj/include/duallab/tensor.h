// duallab/tensor.h

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

#ifndef DUALLAB_TENSOR_H_
#define DUALLAB_TENSOR_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace duallab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<int>;

std::string ShapeString(const Shape &shape);

/// Dense row-major tensor of doubles.  The storage is shared and never
/// mutated after construction, so copies are cheap and detached tensors can be
/// read from several threads.  A tensor produced while a ComputationRecord is
/// active carries the id of its node in that record.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Zeros(Shape shape);
  static Tensor Filled(Shape shape, double value);
  static Tensor Matrix(int rows, int cols, std::vector<double> data);
  static Tensor Scalar(double value);
  static Tensor Row(std::vector<double> data);

  const Shape &shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int rows() const;
  int cols() const;
  size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return size() == 0; }

  std::span<const double> data() const;
  double operator[](size_t i) const { return (*data_)[i]; }
  double at(int r, int c) const;
  /// Value of a single-element tensor.
  double item() const;

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  uint64_t record_id() const { return record_id_; }

  /// Same values, no node.  Gradients do not flow through the result.
  Tensor Detach() const;

 private:
  friend class ComputationRecord;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  int node_ = -1;
  uint64_t record_id_ = 0;
};

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMulElementwise,
  kMatmul,
  kTanh,
  kSigmoid,
  kRelu,
  kConcatLastAxis,
  kConcatRows,
  kSlice,
  kLogSoftmaxLastAxis,
  kSoftmaxLastAxis,
  kSum,
  kMean,
  kL1Distance,
  kAddRow,
  kScale,
  kTranspose,
  kGatherRows,
  kUnfold,
  kBceWithLogits,
  kExternalScalar,
};

const char *OpName(OpKind kind);

/// Integer/real attributes for the ops that need them (slice bounds, gather
/// indices, scale factor, unfold width...).
struct OpAttrs {
  int axis = 0;
  int begin = 0;
  int end = 0;
  double scale = 1.0;
  std::shared_ptr<const std::vector<int>> indices;
  std::shared_ptr<const std::vector<double>> local_grad;
};

/// Append-only tape of operations.  Nodes are stored in creation order, so the
/// tape is topologically sorted by construction.  A record is single-writer.
class ComputationRecord {
 public:
  ComputationRecord();
  ComputationRecord(const ComputationRecord &) = delete;
  ComputationRecord &operator=(const ComputationRecord &) = delete;

  /// Registers `value` as a differentiable input (a parameter or an input
  /// under test).
  Tensor Leaf(const Tensor &value);

  /// Reverse sweep from a scalar loss.  May be called once per reset.
  void Backward(const Tensor &loss);

  /// Gradient of the loss w.r.t. `t`; zeros when `t` is not on the path.
  Tensor Grad(const Tensor &t) const;
  std::span<const double> GradData(int node) const;

  void Reset();
  size_t num_nodes() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }
  uint64_t id() const { return id_; }

  /// Used by the op implementations.
  Tensor Record(OpKind kind, std::vector<Tensor> inputs, Tensor output,
                OpAttrs attrs);

 private:
  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    OpAttrs attrs;
  };

  void Propagate(const Node &node, std::span<const double> grad_out);
  std::vector<double> &GradSlot(int node);

  uint64_t id_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool backward_done_ = false;
};

/// Thread-local "active record" used by the ops.  Ops with at least one
/// tracked input are recorded into it; without an active record the ops only
/// compute values.
ComputationRecord *ActiveRecord();

class RecordScope {
 public:
  explicit RecordScope(ComputationRecord *record);
  ~RecordScope();
  RecordScope(const RecordScope &) = delete;
  RecordScope &operator=(const RecordScope &) = delete;

 private:
  ComputationRecord *previous_;
};

// ----- Operations.  All operate on rank-2 tensors; scalars are 1x1. -----

Tensor Add(const Tensor &a, const Tensor &b);
Tensor Sub(const Tensor &a, const Tensor &b);
Tensor Mul(const Tensor &a, const Tensor &b);
Tensor Matmul(const Tensor &a, const Tensor &b);
Tensor Tanh(const Tensor &x);
Tensor Sigmoid(const Tensor &x);
Tensor Relu(const Tensor &x);
Tensor ConcatLastAxis(std::span<const Tensor> parts);
Tensor ConcatRows(std::span<const Tensor> parts);
/// Half-open range [begin, end) along `axis` (0 = rows, 1 = columns).
Tensor Slice(const Tensor &x, int axis, int begin, int end);
Tensor LogSoftmax(const Tensor &x);
Tensor Softmax(const Tensor &x);
Tensor Sum(const Tensor &x);
Tensor Mean(const Tensor &x);
/// Sum of absolute differences.
Tensor L1Distance(const Tensor &a, const Tensor &b);
/// x (m x n) plus row vector b (1 x n) added to every row.
Tensor AddRow(const Tensor &x, const Tensor &b);
Tensor Scale(const Tensor &x, double factor);
Tensor Transpose(const Tensor &x);
/// Rows of `table` selected by `indices`.
Tensor GatherRows(const Tensor &table, std::span<const int> indices);
/// K x C -> K x (width*C).  Output row k holds rows k-width/2 .. k+width/2 of
/// the input side by side, zero outside the sequence.  width must be odd.
Tensor Unfold(const Tensor &x, int width);
/// Sum over elements of the logistic loss of `logits` against 0/1 `targets`.
Tensor BceWithLogits(const Tensor &logits, const Tensor &targets);
/// Scalar computed outside the tape with its gradient w.r.t. `x` supplied.
Tensor ExternalScalar(const Tensor &x, double value,
                      std::vector<double> local_grad);

/// Generic entry point dispatching on `kind`.
Tensor Apply(OpKind kind, std::span<const Tensor> inputs,
             const OpAttrs &attrs = {});

// ----- Parameters. -----

struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> grad;
};

/// Per-parameter gradient buffers, in ParamStore order.
using GradBuffer = std::vector<std::vector<double>>;

/// Parameter tensors bound for one forward pass: leaves of a record, or
/// detached values when no record is given.
class BoundParams {
 public:
  BoundParams() = default;
  explicit BoundParams(std::vector<Tensor> tensors)
      : tensors_(std::move(tensors)) {}
  const Tensor &operator[](int id) const { return tensors_[id]; }
  size_t size() const { return tensors_.size(); }

 private:
  std::vector<Tensor> tensors_;
};

class ParamStore {
 public:
  int Add(const std::string &name, Tensor value);
  int Find(const std::string &name) const;
  bool Contains(const std::string &name) const { return Find(name) >= 0; }

  size_t size() const { return params_.size(); }
  size_t num_scalars() const;
  const Parameter &param(int id) const { return params_[id]; }
  const Tensor &value(int id) const { return params_[id].value; }
  std::vector<double> &grad(int id) { return params_[id].grad; }
  const std::vector<double> &grad(int id) const { return params_[id].grad; }
  void SetValue(int id, Tensor value);

  BoundParams Bind(ComputationRecord *record) const;
  GradBuffer CollectGrads(const ComputationRecord &record,
                          const BoundParams &bound) const;
  GradBuffer ZeroGradBuffer() const;
  void AddGrads(const GradBuffer &buffer, double weight = 1.0);
  void ZeroGrad();
  double GradNorm() const;

  /// Flat little-endian float64 file plus "name offset dims..." index lines.
  void Save(const std::filesystem::path &bin,
            const std::filesystem::path &index) const;
  /// Loads values for every parameter of this store by name; shapes must
  /// match.
  void Load(const std::filesystem::path &bin,
            const std::filesystem::path &index);

 private:
  std::vector<Parameter> params_;
};

}  // namespace duallab

#endif  // DUALLAB_TENSOR_H_
