// duallab/test_align.cc

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

#include <numeric>

#include "doctest.h"
#include "duallab/align.h"
#include "testing.h"

using namespace duallab;
using namespace duallab::testing;

namespace {

/// Builds a T x K alignment whose column argmax follows `path`.
AlignmentMatrix FromPath(int tokens, const std::vector<int> &path) {
  const int frames = static_cast<int>(path.size());
  std::vector<double> w(static_cast<size_t>(tokens) * frames, 0.1 / tokens);
  for (int k = 0; k < frames; ++k) w[path[k] * frames + k] += 0.9;
  return AlignmentMatrix(tokens, frames, w);
}

}  // namespace

TEST_CASE("expand") {
  CHECK(Expand(std::vector<int>{11, 12, 13}, std::vector<int>{1, 2, 3}) ==
        std::vector<int>{11, 12, 12, 13, 13, 13});
  std::vector<int> t = {5, 7, 5, 9};
  CHECK(Expand(t, std::vector<int>{1, 1, 1, 1}) == t);
  CHECK(Expand(std::vector<int>{4}, std::vector<int>{5}) == std::vector<int>(5, 4));
  CHECK_THROWS(Expand(t, std::vector<int>{1, 1}));
  CHECK_THROWS(Expand(t, std::vector<int>{1, 0, 1, 1}));
  CHECK_THROWS(Expand(t, std::vector<int>{1, -2, 1, 1}));
}

TEST_CASE("expand length law") {
  Rng rng(21);
  for (int i = 0; i < 500; ++i) {
    std::vector<int> t(UniformInt(rng, 1, 20)), d(t.size());
    for (size_t j = 0; j < t.size(); ++j) {
      t[j] = UniformInt(rng, 1, 29);
      d[j] = UniformInt(rng, 1, 9);
    }
    TextSeq out = Expand(t, d);
    CHECK(out.size() == static_cast<size_t>(std::accumulate(d.begin(), d.end(), 0)));
    // Order preserved: collapsing runs by position recovers the text.
    size_t pos = 0;
    for (size_t j = 0; j < t.size(); ++j)
      for (int r = 0; r < d[j]; ++r) REQUIRE(out[pos++] == t[j]);
  }
}

TEST_CASE("extract durations") {
  CHECK(ExtractDurations(OneHotAlignment(std::vector<int>{1, 1, 1})) ==
        std::vector<int>{1, 1, 1});
  CHECK(ExtractDurations(FromPath(3, {0, 0, 1, 2, 2, 2})) == std::vector<int>{2, 1, 3});
  CHECK(ExtractDurations(FromPath(4, {0, 0, 3, 3})) == std::vector<int>{2, 0, 0, 2});
  // Ties go to the lowest row.
  AlignmentMatrix tie(2, 1, {0.5, 0.5});
  CHECK(ColumnArgmax(tie) == std::vector<int>{0});
  CHECK(ExtractDurations(tie) == std::vector<int>{1, 0});
}

TEST_CASE("duration total law over random stochastic matrices") {
  Rng rng(22);
  for (int i = 0; i < 1000; ++i) {
    const int t = UniformInt(rng, 1, 12), k = UniformInt(rng, 1, 40);
    std::vector<double> w(static_cast<size_t>(t) * k);
    for (int c = 0; c < k; ++c) {
      double s = 0;
      for (int r = 0; r < t; ++r) s += w[r * k + c] = Uniform(rng, 0.0, 1.0);
      for (int r = 0; r < t; ++r) w[r * k + c] /= s;
    }
    AlignmentMatrix a(t, k, w);
    CHECK(a.MaxColumnError() < 1e-9);
    DurationSeq d = ExtractDurations(a);
    CHECK(d.size() == static_cast<size_t>(t));
    CHECK(std::accumulate(d.begin(), d.end(), 0) == k);
  }
}

TEST_CASE("one-hot alignment and round trip") {
  AlignmentMatrix a = OneHotAlignment(std::vector<int>{1, 2});
  CHECK(a.tokens() == 2);
  CHECK(a.frames() == 3);
  CHECK(ColumnArgmax(a) == std::vector<int>{0, 1, 1});
  for (int k = 0; k < 3; ++k) CHECK(a.at(0, k) + a.at(1, k) == 1.0);
  CHECK_THROWS(OneHotAlignment(std::vector<int>{2, 0}));

  Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    DurationSeq d(UniformInt(rng, 1, 30));
    for (int &x : d) x = UniformInt(rng, 1, 10);
    AlignmentMatrix m = OneHotAlignment(d);
    REQUIRE(m.MaxColumnError() == 0.0);
    CHECK(ExtractDurations(m) == d);
    CHECK(CheckMonotonicity(m).is_monotone);
  }
}

TEST_CASE("monotonicity") {
  Monotonicity m = CheckMonotonicity(FromPath(3, {0, 0, 1, 1, 2}));
  CHECK(m.is_monotone);
  CHECK(m.violations == 0);
  m = CheckMonotonicity(FromPath(3, {0, 2, 1}));
  CHECK_FALSE(m.is_monotone);
  CHECK(m.violations == 1);
  m = CheckMonotonicity(FromPath(3, {2}));
  CHECK(m.is_monotone);
  CHECK(CheckMonotonicity(FromPath(3, {2, 1, 0, 1, 0})).violations == 3);
}

TEST_CASE("alignment construction errors") {
  CHECK_THROWS(AlignmentMatrix(2, 2, {1, 0, 0}));
  CHECK_THROWS(AlignmentMatrix(1, 2, {1, -0.5}));
  CHECK_THROWS(AlignmentMatrix::FromFrameRows({}));
  CHECK_THROWS(AlignmentMatrix::FromFrameRows({{0.5, 0.5}, {1.0}}));
  AlignmentMatrix rows = AlignmentMatrix::FromFrameRows({{0.2, 0.8}, {0.6, 0.4}, {0, 1}});
  CHECK(rows.tokens() == 2);
  CHECK(rows.frames() == 3);
  CHECK(rows.at(1, 0) == 0.8);
  CHECK(ColumnArgmax(rows) == std::vector<int>{1, 0, 1});
}

TEST_CASE("duration listing round trip") {
  Vocabulary vocab = Vocabulary::Characters();
  TextSeq t = vocab.Parse("<#>bin red<$>");
  DurationSeq d = {4, 2, 3, 2, 1, 5, 2, 3, 6};
  std::string line = FormatDurations(vocab, t, d);
  CHECK(line == "<#>:4 b:2 i:3 n:2 <sp>:1 r:5 e:2 d:3 <$>:6");
  TextSeq t2;
  DurationSeq d2;
  ParseDurations(vocab, line, &t2, &d2);
  CHECK(t2 == t);
  CHECK(d2 == d);
  CHECK_THROWS(ParseDurations(vocab, "b2", &t2, &d2));
  CHECK_THROWS(ParseDurations(vocab, "<blank>:2", &t2, &d2));

  Vocabulary ph = Vocabulary::Phonemes();
  TextSeq pt = ph.Spell("bin");
  DurationSeq pd(pt.size(), 0);
  ParseDurations(ph, FormatDurations(ph, pt, pd), &t2, &d2);
  CHECK(t2 == pt);
  CHECK(d2 == pd);
}

namespace {

void Compositions(int tokens, int frames, const std::vector<int> &mins, std::vector<int> &cur,
                  std::vector<std::vector<int>> *out) {
  const int i = static_cast<int>(cur.size());
  if (i == tokens) {
    if (frames == 0) out->push_back(cur);
    return;
  }
  for (int d = mins[i]; d <= frames; ++d) {
    cur.push_back(d);
    Compositions(tokens, frames - d, mins, cur, out);
    cur.pop_back();
  }
}

}  // namespace

TEST_CASE("monotone segmentation matches exhaustive search") {
  Rng rng(24);
  for (int trial = 0; trial < 300; ++trial) {
    const int t = UniformInt(rng, 1, 4), k = UniformInt(rng, 0, 8);
    std::vector<int> mins(t);
    for (int &m : mins) m = UniformInt(rng, 0, 2);
    if (std::accumulate(mins.begin(), mins.end(), 0) > k) {
      std::vector<double> cost(static_cast<size_t>(k) * t, 0.0);
      CHECK_THROWS(MonotoneSegmentation(cost, k, mins));
      continue;
    }
    std::vector<double> cost(static_cast<size_t>(k) * t);
    for (double &c : cost) c = Uniform(rng, 0.0, 1.0);
    DurationSeq got = MonotoneSegmentation(cost, k, mins);
    auto price = [&](const std::vector<int> &d) {
      double s = 0;
      int frame = 0;
      for (int i = 0; i < t; ++i)
        for (int r = 0; r < d[i]; ++r, ++frame) s += cost[frame * t + i];
      return s;
    };
    std::vector<std::vector<int>> all;
    std::vector<int> cur;
    Compositions(t, k, mins, cur, &all);
    double best = 1e300;
    for (const auto &d : all) best = std::min(best, price(d));
    CHECK(std::accumulate(got.begin(), got.end(), 0) == k);
    for (int i = 0; i < t; ++i) CHECK(got[i] >= mins[i]);
    CHECK(std::abs(price(got) - best) < 1e-12);
  }
  // Clear-cut case: frames carry their token index in the cost.
  std::vector<int> owner = {0, 0, 1, 2, 2, 2};
  std::vector<double> cost;
  for (int f : owner)
    for (int i = 0; i < 3; ++i) cost.push_back(f == i ? 0.0 : 1.0);
  CHECK(MonotoneSegmentation(cost, 6, std::vector<int>{1, 1, 1}) == DurationSeq{2, 1, 3});
  CHECK_THROWS(MonotoneSegmentation(cost, 5, std::vector<int>{1, 1, 1}));
}
