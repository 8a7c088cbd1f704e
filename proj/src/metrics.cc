// duallab/metrics.cc

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

#include "duallab/metrics.h"

#include <cmath>
#include <cstdio>

namespace duallab {

namespace {

std::vector<TextSeq> SplitWords(std::span<const int> ids) {
  std::vector<TextSeq> words(1);
  for (int id : ids) {
    if (id == Vocabulary::kStartSilence || id == Vocabulary::kEndSilence) continue;
    if (id == Vocabulary::kWordSeparator) {
      if (!words.back().empty()) words.emplace_back();
    } else {
      words.back().push_back(id);
    }
  }
  if (words.back().empty()) words.pop_back();
  return words;
}

void RequireSameShape(const Trace &a, const Trace &b) {
  if (a.frames != b.frames || a.channels != b.channels)
    throw ShapeError("trace shapes differ: " + std::to_string(a.frames) + "x" +
                     std::to_string(a.channels) + " vs " +
                     std::to_string(b.frames) + "x" + std::to_string(b.channels));
}

}  // namespace

double ErrorCount::rate() const {
  if (reference == 0) throw Error("error rate with an empty reference");
  return static_cast<double>(errors) / static_cast<double>(reference);
}

ErrorCount TokenErrors(const Vocabulary &vocab, std::span<const int> ref,
                       std::span<const int> hyp) {
  auto keep = [&](std::span<const int> ids) {
    TextSeq out;
    for (int id : ids) {
      if (vocab.IsSilence(id)) continue;
      if (vocab.mode() == TokenMode::kPhoneme && id == Vocabulary::kWordSeparator)
        continue;
      out.push_back(id);
    }
    return out;
  };
  TextSeq r = keep(ref), h = keep(hyp);
  return {EditDistance<int>(r, h), r.size()};
}

ErrorCount WordErrors(const Vocabulary &, std::span<const int> ref,
                      std::span<const int> hyp) {
  auto r = SplitWords(ref), h = SplitWords(hyp);
  return {EditDistance<TextSeq>(r, h), r.size()};
}

double Cer(const Vocabulary &vocab, std::string_view ref, std::string_view hyp) {
  return TokenErrors(vocab, vocab.Parse(ref), vocab.Parse(hyp)).rate();
}

double Wer(const Vocabulary &vocab, std::string_view ref, std::string_view hyp) {
  return WordErrors(vocab, vocab.Parse(ref), vocab.Parse(hyp)).rate();
}

double MeanL1(const Trace &ref, const Trace &hyp) {
  RequireSameShape(ref, hyp);
  double s = 0.0;
  for (size_t i = 0; i < ref.values.size(); ++i)
    s += std::abs(static_cast<double>(ref.values[i]) - hyp.values[i]);
  return s / static_cast<double>(ref.values.size());
}

double MeanSquaredError(const Trace &ref, const Trace &hyp) {
  RequireSameShape(ref, hyp);
  double s = 0.0;
  for (size_t i = 0; i < ref.values.size(); ++i) {
    double d = static_cast<double>(ref.values[i]) - hyp.values[i];
    s += d * d;
  }
  return s / static_cast<double>(ref.values.size());
}

double PsnrFromMse(double mse) {
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(1.0 / mse);
}

double PsnrTrace(const Trace &ref, const Trace &hyp) {
  return PsnrFromMse(MeanSquaredError(ref, hyp));
}

Trace MatchLength(const Trace &hyp, int frames, bool *adjusted) {
  if (adjusted) *adjusted = hyp.frames != frames;
  if (hyp.frames == frames) return hyp;
  Trace out = hyp;
  out.frames = frames;
  out.values.resize(static_cast<size_t>(frames) * hyp.channels);
  for (int k = hyp.frames; k < frames; ++k)
    for (int c = 0; c < hyp.channels; ++c)
      out.values[static_cast<size_t>(k) * hyp.channels + c] = hyp.at(hyp.frames - 1, c);
  return out;
}

std::string EvalReport::CsvHeader() {
  return "n_utterances,cer,wer,mean_l1,mean_psnr,length_adjusted";
}

std::string EvalReport::CsvRow() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.4f,%d", n_utterances,
                cer, wer, mean_l1, mean_psnr, length_adjusted);
  return buf;
}

void EvalReport::PrettyPrint(std::ostream &os) const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "  utterances  %6d\n"
                "  %s         %6.2f %%\n"
                "  WER         %6.2f %%\n"
                "  L1          %8.4f\n"
                "  PSNR        %6.2f dB\n",
                n_utterances, phoneme ? "PER" : "CER", 100.0 * cer, 100.0 * wer,
                mean_l1, mean_psnr);
  os << buf;
  if (length_adjusted > 0)
    os << "  (" << length_adjusted << " generated traces padded/truncated)\n";
}

}  // namespace duallab
