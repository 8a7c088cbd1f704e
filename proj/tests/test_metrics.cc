// duallab/test_metrics.cc

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
#include <sstream>

#include "doctest.h"
#include "duallab/metrics.h"
#include "duallab/random.h"

using namespace duallab;

namespace {

/// Plain exponential recursion over the three edit choices.
size_t SlowEdit(const std::string &a, const std::string &b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  std::string ra = a.substr(1), rb = b.substr(1);
  size_t best = SlowEdit(ra, rb) + (a[0] != b[0]);
  best = std::min(best, SlowEdit(ra, b) + 1);
  best = std::min(best, SlowEdit(a, rb) + 1);
  return best;
}

std::string RandomString(Rng &rng, int max_len) {
  std::string s(UniformInt(rng, 0, max_len), 'a');
  for (char &c : s) c = static_cast<char>('a' + UniformInt(rng, 0, 2));
  return s;
}

Trace MakeTrace(int frames, int channels, std::vector<float> values) {
  Trace t;
  t.frames = frames;
  t.channels = channels;
  t.values = std::move(values);
  return t;
}

}  // namespace

TEST_CASE("edit distance examples") {
  CHECK(EditDistance("abc", "abc") == 0);
  CHECK(EditDistance("", "ab") == 2);
  CHECK(EditDistance("ab", "") == 2);
  CHECK(EditDistance("kitten", "sitting") == 3);
  CHECK(SlowEdit("kitten", "sitting") == 3);
  CHECK(EditDistance<int>(std::vector<int>{1, 2, 3}, std::vector<int>{3, 2, 1}) == 2);
}

TEST_CASE("edit distance is a metric and matches the recursion") {
  Rng rng(31);
  for (int i = 0; i < 300; ++i) {
    std::string a = RandomString(rng, 6), b = RandomString(rng, 6), c = RandomString(rng, 6);
    size_t ab = EditDistance(a, b);
    CHECK(ab == SlowEdit(a, b));
    CHECK(ab == EditDistance(b, a));
    CHECK((ab == 0) == (a == b));
    CHECK(EditDistance(a, c) <= ab + EditDistance(b, c));
    CHECK(ab >= (a.size() > b.size() ? a.size() - b.size() : b.size() - a.size()));
    CHECK(ab <= std::max(a.size(), b.size()));
  }
}

TEST_CASE("character and word error rates") {
  Vocabulary v = Vocabulary::Characters();
  const std::string ref = "set white with p two soon";
  CHECK(Wer(v, ref, "set white with b two soon") == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(Cer(v, ref, "set white with b two soon") == doctest::Approx(1.0 / 25).epsilon(1e-15));
  CHECK(Wer(v, ref, ref) == 0.0);
  CHECK(Cer(v, ref, ref) == 0.0);
  CHECK(Wer(v, ref, "") == 1.0);
  CHECK(Cer(v, ref, "") == 1.0);
  CHECK(Wer(v, "bin", "bin blue at") == 2.0);
  CHECK_THROWS(Wer(v, "", "bin"));
  CHECK_THROWS(Cer(v, "<#><$>", "bin"));
}

TEST_CASE("error rates ignore silence placement") {
  Vocabulary v = Vocabulary::Characters();
  const std::string ref = "place red at f nine again";
  const std::string hyp = "place rad at f nine agin";
  double cer = Cer(v, ref, hyp), wer = Wer(v, ref, hyp);
  for (const auto &[r, h] : std::vector<std::pair<std::string, std::string>>{
           {"<#>" + ref + "<$>", hyp},
           {ref, "<#><#>" + hyp},
           {"<#>place red<$> at f nine again", "place<#> rad at f nine agin<$>"},
       }) {
    CHECK(Cer(v, r, h) == cer);
    CHECK(Wer(v, r, h) == wer);
  }
}

TEST_CASE("phoneme error rate scores phonemes only") {
  Vocabulary v = Vocabulary::Phonemes();
  std::string bin = v.Render(v.Spell("bin")), blue = v.Render(v.Spell("blue"));
  std::string ref = bin + " | " + blue;
  CHECK(Cer(v, ref, bin + " " + blue) == 0.0);
  CHECK(Wer(v, ref, bin + " " + blue) == 1.0);
  CHECK(Wer(v, ref, "<#> " + ref + " <$>") == 0.0);
  TextSeq r = v.Parse(ref);
  CHECK(TokenErrors(v, r, TextSeq{}).reference == r.size() - 1);
}

TEST_CASE("psnr") {
  Trace a = MakeTrace(2, 2, {0.1f, 0.2f, 0.3f, 0.4f});
  CHECK(PsnrTrace(a, a) == 99.0);
  CHECK(PsnrFromMse(0.01) == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(PsnrFromMse(1.0) == 0.0);
  CHECK(PsnrFromMse(1e-11) == 99.0);
  Trace b = MakeTrace(2, 2, {0.2f, 0.2f, 0.3f, 0.2f});
  double d0 = double(0.1f) - double(0.2f), d3 = double(0.4f) - double(0.2f);
  CHECK(PsnrTrace(a, b) == doctest::Approx(10 * std::log10(4 / (d0 * d0 + d3 * d3))));
  CHECK_THROWS(PsnrTrace(a, MakeTrace(1, 2, {0.0f, 0.0f})));
  CHECK_THROWS(MeanL1(a, MakeTrace(2, 1, {0.0f, 0.0f})));

  Rng rng(32);
  for (int i = 0; i < 50; ++i) {
    const int k = UniformInt(rng, 1, 20), d = UniformInt(rng, 1, 8);
    std::vector<float> x(k * d), y(k * d);
    for (auto &v : x) v = static_cast<float>(Uniform(rng, 0, 1));
    for (auto &v : y) v = static_cast<float>(Uniform(rng, 0, 1));
    double se = 0, ae = 0;
    for (int j = 0; j < k * d; ++j) {
      double diff = double(x[j]) - double(y[j]);
      se += diff * diff;
      ae += std::abs(diff);
    }
    Trace tx = MakeTrace(k, d, x), ty = MakeTrace(k, d, y);
    CHECK(std::abs(PsnrTrace(tx, ty) - 10 * std::log10(k * d / se)) < 1e-9);
    CHECK(std::abs(MeanL1(tx, ty) - ae / (k * d)) < 1e-12);
  }
}

TEST_CASE("psnr falls as noise grows") {
  std::vector<double> amplitudes = {0.01, 0.02, 0.05, 0.1, 0.2};
  std::vector<double> mean(amplitudes.size(), 0.0);
  Rng rng(33);
  std::vector<float> base(40 * 8);
  for (auto &v : base) v = static_cast<float>(Uniform(rng, 0.3, 0.7));
  Trace ref = MakeTrace(40, 8, base);
  for (int seed = 0; seed < 100; ++seed)
    for (size_t a = 0; a < amplitudes.size(); ++a) {
      Rng noise(DeriveSeed(seed, a));
      Trace t = ref;
      for (auto &v : t.values) v = static_cast<float>(v + Gaussian(noise, amplitudes[a]));
      mean[a] += PsnrTrace(ref, t) / 100;
    }
  for (size_t a = 1; a < amplitudes.size(); ++a) CHECK(mean[a] < mean[a - 1]);
}

TEST_CASE("length matching") {
  Trace t = MakeTrace(2, 2, {0.1f, 0.2f, 0.3f, 0.4f});
  bool adjusted = true;
  CHECK(MatchLength(t, 2, &adjusted).values == t.values);
  CHECK_FALSE(adjusted);
  Trace longer = MatchLength(t, 4, &adjusted);
  CHECK(adjusted);
  CHECK(longer.values == std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f, 0.3f, 0.4f, 0.3f, 0.4f});
  CHECK(MatchLength(t, 1).values == std::vector<float>{0.1f, 0.2f});
}

TEST_CASE("report formatting") {
  EvalReport r;
  r.cer = 0.0125;
  r.wer = 0.05;
  r.mean_l1 = 0.02;
  r.mean_psnr = 30.5;
  r.n_utterances = 200;
  CHECK(EvalReport::CsvHeader() == "n_utterances,cer,wer,mean_l1,mean_psnr,length_adjusted");
  CHECK(r.CsvRow() == "200,0.012500,0.050000,0.020000,30.5000,0");
  std::ostringstream os;
  r.PrettyPrint(os);
  CHECK(os.str().find("CER") != std::string::npos);
  r.phoneme = true;
  std::ostringstream ph;
  r.PrettyPrint(ph);
  CHECK(ph.str().find("PER") != std::string::npos);
}
