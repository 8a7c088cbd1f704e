// duallab/test_tensor.cc

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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "duallab/tensor.h"
#include "testing.h"

using namespace duallab;
using namespace duallab::testing;

namespace {

Tensor Cat(std::initializer_list<Tensor> parts) {
  return ConcatLastAxis(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor CatRows(std::initializer_list<Tensor> parts) {
  return ConcatRows(std::span<const Tensor>(parts.begin(), parts.size()));
}

/// Scalar readout that weights every element differently, so that gradient
/// checks see a generic upstream gradient.
Tensor Readout(const Tensor &x, uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = RandomMatrix(rng, x.cols(), 1);
  Tensor r = Matmul(x, w);
  return Sum(Mul(r, r));
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  Tensor t = Tensor::Matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(Tensor::Matrix(2, 2, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}, {}), ShapeError);
  CHECK(Tensor::Scalar(4).item() == 4);
  CHECK_THROWS(t.item());
}

TEST_CASE("apply examples") {
  Rng rng(1);
  Tensor a = RandomMatrix(rng, 2, 2);
  Tensor eye = Tensor::Matrix(2, 2, {1, 0, 0, 1});
  CHECK(BitEqual(Matmul(eye, a), a));

  Tensor ls = LogSoftmax(Tensor::Row({0, 0, 0}));
  for (double v : ls.data()) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-15));

  Tensor x = RandomMatrix(rng, 3, 4);
  CHECK(L1Distance(x, x).item() == 0.0);

  Tensor p = Softmax(Tensor::Row({1, 2, 3}));
  double s = 0;
  for (double v : p.data()) s += v;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("apply dispatches by kind") {
  Tensor a = Tensor::Row({1, 2}), b = Tensor::Row({3, 5});
  Tensor in[] = {a, b};
  CHECK(BitEqual(Apply(OpKind::kAdd, in), Tensor::Row({4, 7})));
  CHECK(BitEqual(Apply(OpKind::kSub, in), Tensor::Row({-2, -3})));
  CHECK(BitEqual(Apply(OpKind::kMulElementwise, in), Tensor::Row({3, 10})));
  CHECK(Apply(OpKind::kL1Distance, in).item() == 5.0);
  OpAttrs slice;
  slice.axis = 1;
  slice.begin = 1;
  slice.end = 2;
  Tensor one[] = {b};
  CHECK(Apply(OpKind::kSlice, one, slice).item() == 5.0);
  CHECK(Apply(OpKind::kSum, one).item() == 8.0);
  CHECK(Apply(OpKind::kMean, one).item() == 4.0);
}

TEST_CASE("shape mismatches are errors") {
  Tensor a = Tensor::Zeros({2, 3}), b = Tensor::Zeros({3, 2});
  CHECK_THROWS_AS(Add(a, b), ShapeError);
  CHECK_THROWS_AS(Matmul(a, a), ShapeError);
  CHECK_THROWS_AS(L1Distance(a, b), ShapeError);
  CHECK_THROWS_AS(AddRow(a, Tensor::Zeros({1, 2})), ShapeError);
  CHECK_THROWS_AS(Slice(a, 1, 2, 4), ShapeError);
  CHECK_THROWS_AS(Cat({a, b}), ShapeError);
  CHECK_THROWS_AS(Unfold(a, 2), ShapeError);
}

TEST_CASE("non-finite outputs raise") {
  Tensor big = Tensor::Row({1e308, 1e308});
  CHECK_THROWS_AS(Add(big, big), NumericError);
  CHECK_THROWS_AS(Tanh(Tensor::Row({NAN})), NumericError);
}

TEST_CASE("backward closed forms") {
  {
    ComputationRecord rec;
    RecordScope scope(&rec);
    Tensor x = rec.Leaf(Tensor::Scalar(3));
    rec.Backward(Mul(x, x));
    CHECK(rec.Grad(x).item() == 6.0);
  }
  {
    ComputationRecord rec;
    RecordScope scope(&rec);
    Tensor c = Tensor::Row({2, -1, 0.5});
    Tensor x = rec.Leaf(Tensor::Row({7, 8, 9}));
    rec.Backward(Sum(Mul(c, x)));
    CHECK(BitEqual(rec.Grad(x), c));
  }
}

TEST_CASE("backward twice without reset is an error") {
  ComputationRecord rec;
  RecordScope scope(&rec);
  Tensor x = rec.Leaf(Tensor::Scalar(2));
  Tensor y = Mul(x, x);
  rec.Backward(y);
  CHECK_THROWS_AS(rec.Backward(y), Error);
  rec.Reset();
  Tensor z = rec.Leaf(Tensor::Scalar(5));
  rec.Backward(Mul(z, z));
  CHECK(rec.Grad(z).item() == 10.0);
}

TEST_CASE("backward needs a scalar loss") {
  ComputationRecord rec;
  RecordScope scope(&rec);
  Tensor x = rec.Leaf(Tensor::Row({1, 2}));
  CHECK_THROWS(rec.Backward(Add(x, x)));
}

TEST_CASE("fan-out gradients accumulate") {
  ComputationRecord rec;
  RecordScope scope(&rec);
  Tensor x = rec.Leaf(Tensor::Scalar(1.5));
  rec.Backward(Add(Add(x, x), Mul(x, x)));
  CHECK(rec.Grad(x).item() == doctest::Approx(2 + 3.0).epsilon(1e-15));
}

TEST_CASE("tape is topologically ordered and reaches every input") {
  ComputationRecord rec;
  RecordScope scope(&rec);
  Tensor a = rec.Leaf(Tensor::Row({1, 2}));
  Tensor b = rec.Leaf(Tensor::Row({3, 4}));
  Tensor unused = rec.Leaf(Tensor::Row({5, 6}));
  Tensor c = Mul(a, b);
  CHECK(c.node() > a.node());
  CHECK(c.node() > b.node());
  rec.Backward(Sum(c));
  CHECK(rec.Grad(a).shape() == a.shape());
  CHECK(BitEqual(rec.Grad(a), Tensor::Row({3, 4})));
  CHECK(BitEqual(rec.Grad(unused), Tensor::Zeros({1, 2})));
}

TEST_CASE("gradient check: every op individually") {
  Rng rng(7);
  auto check = [](const char *name, const std::vector<Tensor> &in, const LossFn &f) {
    GradCheckResult r = GradCheck(in, f);
    INFO(name);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < 1e-5);
  };
  Tensor a = RandomMatrix(rng, 3, 4), b = RandomMatrix(rng, 3, 4);
  Tensor m = RandomMatrix(rng, 4, 2);
  Tensor row = RandomMatrix(rng, 1, 4);
  Tensor positive = RandomMatrix(rng, 3, 4, 0.2, 1.0);
  Tensor away_from_zero = Sub(Mul(positive, Tensor::Filled({3, 4}, 1.0)),
                              Tensor::Filled({3, 4}, 0.6));
  check("add", {a, b}, [](auto &v) { return Readout(Add(v[0], v[1])); });
  check("sub", {a, b}, [](auto &v) { return Readout(Sub(v[0], v[1])); });
  check("mul", {a, b}, [](auto &v) { return Readout(Mul(v[0], v[1])); });
  check("matmul", {a, m}, [](auto &v) { return Readout(Matmul(v[0], v[1])); });
  check("tanh", {a}, [](auto &v) { return Readout(Tanh(v[0])); });
  check("sigmoid", {a}, [](auto &v) { return Readout(Sigmoid(v[0])); });
  check("relu", {away_from_zero}, [](auto &v) { return Readout(Relu(v[0])); });
  check("concat_last_axis", {a, m.rows() == 4 ? RandomMatrix(rng, 3, 2) : m},
        [](auto &v) { return Readout(Cat({v[0], v[1]})); });
  check("concat_rows", {a, row}, [](auto &v) { return Readout(CatRows({v[0], v[1]})); });
  check("slice cols", {a}, [](auto &v) { return Readout(Slice(v[0], 1, 1, 3)); });
  check("slice rows", {a}, [](auto &v) { return Readout(Slice(v[0], 0, 1, 3)); });
  check("log_softmax", {a}, [](auto &v) { return Readout(LogSoftmax(v[0])); });
  check("softmax", {a}, [](auto &v) { return Readout(Softmax(v[0])); });
  check("sum", {a}, [](auto &v) { auto s = Sum(v[0]); return Mul(s, s); });
  check("mean", {a}, [](auto &v) { auto s = Mean(v[0]); return Mul(s, s); });
  check("l1_distance", {a, b}, [](auto &v) { return L1Distance(v[0], v[1]); });
  check("add_row", {a, row}, [](auto &v) { return Readout(AddRow(v[0], v[1])); });
  check("scale", {a}, [](auto &v) { return Readout(Scale(v[0], -2.5)); });
  check("transpose", {a}, [](auto &v) { return Readout(Transpose(v[0])); });
  check("gather_rows", {a}, [](auto &v) {
    int idx[] = {2, 0, 2, 1};
    return Readout(GatherRows(v[0], idx));
  });
  check("unfold", {a}, [](auto &v) { return Readout(Unfold(v[0], 3)); });
  Tensor targets = Tensor::Matrix(3, 4, {1, 0, 0, 1, 0, 1, 1, 0, 0.5, 0, 1, 1});
  check("bce_with_logits", {a}, [targets](auto &v) { return BceWithLogits(v[0], targets); });
  check("external_scalar", {a}, [](auto &v) {
    // f(x) = sum x^3 computed outside the tape.
    double value = 0;
    std::vector<double> grad;
    for (double x : v[0].data()) {
      value += x * x * x;
      grad.push_back(3 * x * x);
    }
    Tensor s = ExternalScalar(v[0], value, grad);
    return Mul(s, s);
  });
}

TEST_CASE("gradient check: random 3-layer network") {
  Rng rng(11);
  std::vector<Tensor> params = {RandomMatrix(rng, 6, 32), RandomMatrix(rng, 1, 32),
                                RandomMatrix(rng, 32, 32), RandomMatrix(rng, 1, 32),
                                RandomMatrix(rng, 32, 5), RandomMatrix(rng, 1, 5)};
  size_t n = 0;
  for (auto &p : params) n += p.size();
  CHECK(n <= 5000);
  Tensor x = RandomMatrix(rng, 4, 6);
  Tensor target = RandomMatrix(rng, 4, 5);
  GradCheckResult r = GradCheck(params, [&](const std::vector<Tensor> &v) {
    Tensor h = Tanh(AddRow(Matmul(x, v[0]), v[1]));
    h = Sigmoid(AddRow(Matmul(h, v[2]), v[3]));
    Tensor y = LogSoftmax(AddRow(Matmul(h, v[4]), v[5]));
    return Sum(Mul(y, target));
  });
  CHECK(r.checked == n);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("zero-gradient parameters do not move the loss") {
  Rng rng(3);
  Tensor w = RandomMatrix(rng, 3, 3), dead = RandomMatrix(rng, 3, 3);
  Tensor x = RandomMatrix(rng, 2, 3);
  auto loss = [&](const Tensor &wv, const Tensor &dv) {
    Tensor used = Matmul(x, wv);
    Tensor masked = Mul(Matmul(x, dv), Tensor::Zeros({2, 3}));
    return Sum(Mul(Add(used, masked), used));
  };
  ComputationRecord rec;
  Tensor g;
  double base;
  {
    RecordScope scope(&rec);
    Tensor lw = rec.Leaf(w), ld = rec.Leaf(dead);
    Tensor l = loss(lw, ld);
    base = l.item();
    rec.Backward(l);
    g = rec.Grad(ld);
  }
  for (size_t j = 0; j < g.size(); ++j) {
    CHECK(g[j] == 0.0);
    std::vector<double> v(dead.data().begin(), dead.data().end());
    v[j] += 1e-6;
    double moved = loss(w, Tensor(dead.shape(), v)).item();
    CHECK(std::abs(moved - base) <= 1e-12 * std::max(1.0, std::abs(base)));
  }
}

TEST_CASE("forward values and gradients are deterministic") {
  auto run = [] {
    Rng rng(5);
    Tensor w = RandomMatrix(rng, 8, 8), x = RandomMatrix(rng, 5, 8);
    ComputationRecord rec;
    RecordScope scope(&rec);
    Tensor lw = rec.Leaf(w);
    Tensor y = LogSoftmax(Tanh(Matmul(x, lw)));
    rec.Backward(Sum(y));
    return std::pair{y.Detach(), rec.Grad(lw)};
  };
  auto [y1, g1] = run();
  auto [y2, g2] = run();
  CHECK(BitEqual(y1, y2));
  CHECK(BitEqual(g1, g2));
}

TEST_CASE("param store: bind, collect and accumulate") {
  ParamStore store;
  int a = store.Add("a", Tensor::Row({1, 2}));
  int b = store.Add("b", Tensor::Scalar(3));
  CHECK_THROWS(store.Add("a", Tensor::Scalar(0)));
  CHECK(store.Find("b") == b);
  CHECK(store.Find("missing") == -1);
  ComputationRecord rec;
  RecordScope scope(&rec);
  BoundParams p = store.Bind(&rec);
  rec.Backward(Sum(Mul(Scale(p[a], 2.0), p[a])));
  GradBuffer g = store.CollectGrads(rec, p);
  CHECK(g[a] == std::vector<double>{4, 8});
  CHECK(g[b] == std::vector<double>{0});
  store.ZeroGrad();
  store.AddGrads(g, 0.5);
  store.AddGrads(g, 0.5);
  CHECK(store.grad(a) == std::vector<double>{4, 8});
  CHECK(store.GradNorm() == doctest::Approx(std::sqrt(80.0)));
}

TEST_CASE("param store save/load is bit-exact") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "duallab_test_params";
  fs::create_directories(dir);
  Rng rng(21);
  ParamStore store;
  store.Add("layer.w", RandomMatrix(rng, 7, 5, -1e3, 1e3));
  store.Add("layer.b", RandomMatrix(rng, 1, 5, -1e-300, 1e-300));
  store.Add("scalar", Tensor::Scalar(std::nextafter(1.0, 2.0)));
  store.Save(dir / "p.bin", dir / "p.idx");

  ParamStore other;
  other.Add("scalar", Tensor::Scalar(0));
  other.Add("layer.w", Tensor::Zeros({7, 5}));
  other.Add("layer.b", Tensor::Zeros({1, 5}));
  other.Load(dir / "p.bin", dir / "p.idx");
  for (const char *name : {"layer.w", "layer.b", "scalar"})
    CHECK(BitEqual(store.value(store.Find(name)), other.value(other.Find(name))));
  CHECK(fs::file_size(dir / "p.bin") == (35 + 5 + 1) * sizeof(double));

  ParamStore wrong;
  wrong.Add("layer.w", Tensor::Zeros({5, 7}));
  CHECK_THROWS(wrong.Load(dir / "p.bin", dir / "p.idx"));
  ParamStore absent;
  absent.Add("not_there", Tensor::Zeros({1, 1}));
  CHECK_THROWS(absent.Load(dir / "p.bin", dir / "p.idx"));
  fs::remove_all(dir);
}

TEST_CASE("detached tensors are safe to read across threads") {
  Rng rng(4);
  Tensor w = RandomMatrix(rng, 16, 16);
  std::vector<double> results(4);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] {
      ComputationRecord rec;
      RecordScope scope(&rec);
      Tensor lw = rec.Leaf(w);
      Tensor y = Sum(Tanh(Matmul(lw, lw)));
      rec.Backward(y);
      results[t] = rec.Grad(lw)[3];
    });
  for (auto &t : pool) t.join();
  for (int t = 1; t < 4; ++t) CHECK(results[t] == results[0]);
}
