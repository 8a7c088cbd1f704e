// duallab/align.h

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

#ifndef DUALLAB_ALIGN_H_
#define DUALLAB_ALIGN_H_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "duallab/text.h"

namespace duallab {

/// T x K attention weights: row i is input token i, column k is output
/// frame k.  Every column is a probability distribution.
class AlignmentMatrix {
 public:
  AlignmentMatrix() = default;
  AlignmentMatrix(int tokens, int frames, std::vector<double> weights);
  /// Builds from per-frame rows (K rows of length T), as produced by an
  /// attention decoder.
  static AlignmentMatrix FromFrameRows(const std::vector<std::vector<double>> &rows);

  int tokens() const { return tokens_; }
  int frames() const { return frames_; }
  double at(int token, int frame) const {
    return weights_[static_cast<size_t>(token) * frames_ + frame];
  }
  std::span<const double> weights() const { return weights_; }
  /// Largest |column sum - 1|.
  double MaxColumnError() const;

 private:
  int tokens_ = 0;
  int frames_ = 0;
  std::vector<double> weights_;
};

/// Token i repeated durations[i] times.
TextSeq Expand(std::span<const int> text, std::span<const int> durations);

/// Row index of each column's maximum, ties to the lowest row.
std::vector<int> ColumnArgmax(const AlignmentMatrix &alignment);

/// d_i = number of columns whose argmax is row i.  Zeros allowed.
DurationSeq ExtractDurations(const AlignmentMatrix &alignment);

struct Monotonicity {
  bool is_monotone = true;
  int violations = 0;  // descents in the column-argmax path
};

Monotonicity CheckMonotonicity(const AlignmentMatrix &alignment);

/// Column k is one-hot on the token active at frame k of Expand(durations).
AlignmentMatrix OneHotAlignment(std::span<const int> durations);

/// Splits `frames` frames into `tokens` consecutive segments minimizing the
/// summed cost, where cost[k * tokens + i] is the price of frame k belonging
/// to token i.  Segment i gets at least min_durations[i] frames (zero
/// allowed).  Ties prefer the shortest earlier segments.
DurationSeq MonotoneSegmentation(std::span<const double> cost, int frames,
                                 std::span<const int> min_durations);

/// "tok:count tok:count ..." using the vocabulary's display spelling.
std::string FormatDurations(const Vocabulary &vocab, std::span<const int> text,
                            std::span<const int> durations);

/// Inverse of FormatDurations.
void ParseDurations(const Vocabulary &vocab, const std::string &line,
                    TextSeq *text, DurationSeq *durations);

void WriteDurationFile(const std::filesystem::path &path,
                       const Vocabulary &vocab,
                       const std::vector<TextSeq> &texts,
                       const std::vector<DurationSeq> &durations);

}  // namespace duallab

#endif  // DUALLAB_ALIGN_H_
