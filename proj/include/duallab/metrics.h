// duallab/metrics.h

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

#ifndef DUALLAB_METRICS_H_
#define DUALLAB_METRICS_H_

#include <algorithm>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duallab/text.h"
#include "duallab/trace.h"

namespace duallab {

/// Levenshtein distance with unit costs.
template <typename T>
size_t EditDistance(std::span<const T> ref, std::span<const T> hyp) {
  std::vector<size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
  for (size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
  for (size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= hyp.size(); ++j) {
      size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

inline size_t EditDistance(std::string_view ref, std::string_view hyp) {
  return EditDistance<char>(std::span<const char>(ref.data(), ref.size()),
                            std::span<const char>(hyp.data(), hyp.size()));
}

struct ErrorCount {
  size_t errors = 0;
  size_t reference = 0;

  double rate() const;
  ErrorCount &operator+=(const ErrorCount &o) {
    errors += o.errors;
    reference += o.reference;
    return *this;
  }
};

/// Token-level errors with silence removed.  Character mode counts word
/// separators as characters; phoneme mode scores phonemes only.
ErrorCount TokenErrors(const Vocabulary &vocab, std::span<const int> ref,
                       std::span<const int> hyp);
ErrorCount WordErrors(const Vocabulary &vocab, std::span<const int> ref,
                      std::span<const int> hyp);

/// CER (PER in phoneme mode) and WER on rendered text.  Throw on an empty
/// reference.
double Cer(const Vocabulary &vocab, std::string_view ref, std::string_view hyp);
double Wer(const Vocabulary &vocab, std::string_view ref, std::string_view hyp);

/// Mean absolute difference per value.
double MeanL1(const Trace &ref, const Trace &hyp);
double MeanSquaredError(const Trace &ref, const Trace &hyp);
/// 10 log10(1 / MSE) with peak 1, 99 dB when MSE < 1e-10.
double PsnrFromMse(double mse);
double PsnrTrace(const Trace &ref, const Trace &hyp);

/// Pads (repeating the last frame) or truncates `hyp` to `frames`.
Trace MatchLength(const Trace &hyp, int frames, bool *adjusted = nullptr);

struct EvalReport {
  double cer = 0.0;  // PER in phoneme mode
  double wer = 0.0;
  double mean_l1 = 0.0;
  double mean_psnr = 0.0;
  int n_utterances = 0;
  bool phoneme = false;
  int length_adjusted = 0;  // generated traces padded/truncated for scoring

  static std::string CsvHeader();
  std::string CsvRow() const;
  void PrettyPrint(std::ostream &os) const;
};

}  // namespace duallab

#endif  // DUALLAB_METRICS_H_
