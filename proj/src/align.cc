// duallab/align.cc

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

#include "duallab/align.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "duallab/tensor.h"

namespace duallab {

AlignmentMatrix::AlignmentMatrix(int tokens, int frames,
                                 std::vector<double> weights)
    : tokens_(tokens), frames_(frames), weights_(std::move(weights)) {
  if (tokens <= 0 || frames <= 0 ||
      weights_.size() != static_cast<size_t>(tokens) * frames)
    throw ShapeError("alignment: " + std::to_string(weights_.size()) +
                     " weights for " + std::to_string(tokens) + " x " +
                     std::to_string(frames));
  for (double w : weights_)
    if (!(w >= 0.0)) throw NumericError("alignment: negative or NaN weight");
}

AlignmentMatrix AlignmentMatrix::FromFrameRows(
    const std::vector<std::vector<double>> &rows) {
  if (rows.empty()) throw ShapeError("alignment: no frames");
  int frames = static_cast<int>(rows.size());
  int tokens = static_cast<int>(rows[0].size());
  std::vector<double> w(static_cast<size_t>(tokens) * frames);
  for (int k = 0; k < frames; ++k) {
    if (static_cast<int>(rows[k].size()) != tokens)
      throw ShapeError("alignment: ragged frame rows");
    for (int i = 0; i < tokens; ++i) w[static_cast<size_t>(i) * frames + k] = rows[k][i];
  }
  return AlignmentMatrix(tokens, frames, std::move(w));
}

double AlignmentMatrix::MaxColumnError() const {
  double worst = 0.0;
  for (int k = 0; k < frames_; ++k) {
    double s = 0.0;
    for (int i = 0; i < tokens_; ++i) s += at(i, k);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

TextSeq Expand(std::span<const int> text, std::span<const int> durations) {
  if (text.size() != durations.size())
    throw Error("expand: " + std::to_string(text.size()) + " tokens but " +
                std::to_string(durations.size()) + " durations");
  TextSeq out;
  for (size_t i = 0; i < text.size(); ++i) {
    if (durations[i] < 1)
      throw Error("expand: duration " + std::to_string(durations[i]) +
                  " at token " + std::to_string(i));
    out.insert(out.end(), durations[i], text[i]);
  }
  return out;
}

std::vector<int> ColumnArgmax(const AlignmentMatrix &alignment) {
  std::vector<int> path(alignment.frames(), 0);
  for (int k = 0; k < alignment.frames(); ++k) {
    int best = 0;
    for (int i = 1; i < alignment.tokens(); ++i)
      if (alignment.at(i, k) > alignment.at(best, k)) best = i;
    path[k] = best;
  }
  return path;
}

DurationSeq ExtractDurations(const AlignmentMatrix &alignment) {
  DurationSeq d(alignment.tokens(), 0);
  for (int row : ColumnArgmax(alignment)) ++d[row];
  return d;
}

Monotonicity CheckMonotonicity(const AlignmentMatrix &alignment) {
  Monotonicity m;
  std::vector<int> path = ColumnArgmax(alignment);
  for (size_t k = 1; k < path.size(); ++k)
    if (path[k] < path[k - 1]) ++m.violations;
  m.is_monotone = m.violations == 0;
  return m;
}

AlignmentMatrix OneHotAlignment(std::span<const int> durations) {
  std::vector<int> rows(durations.size());
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<int>(i);
  TextSeq owner = Expand(rows, durations);
  int tokens = static_cast<int>(durations.size());
  int frames = static_cast<int>(owner.size());
  std::vector<double> w(static_cast<size_t>(tokens) * frames, 0.0);
  for (int k = 0; k < frames; ++k) w[static_cast<size_t>(owner[k]) * frames + k] = 1.0;
  return AlignmentMatrix(tokens, frames, std::move(w));
}

DurationSeq MonotoneSegmentation(std::span<const double> cost, int frames,
                                 std::span<const int> min_durations) {
  const int tokens = static_cast<int>(min_durations.size());
  if (tokens == 0 || frames < 0 ||
      cost.size() != static_cast<size_t>(frames) * tokens)
    throw ShapeError("monotone_segmentation: cost is not frames x tokens");
  int need = 0;
  for (int m : min_durations) {
    if (m < 0) throw Error("monotone_segmentation: negative minimum duration");
    need += m;
  }
  if (need > frames) throw Error("monotone_segmentation: too few frames");

  const double inf = std::numeric_limits<double>::infinity();
  const size_t stride = static_cast<size_t>(frames) + 1;
  // best[i][k]: first i segments cover the first k frames.
  std::vector<double> best((tokens + 1) * stride, inf);
  std::vector<int> from((tokens + 1) * stride, -1);
  best[0] = 0.0;
  for (int i = 1; i <= tokens; ++i) {
    const int lo = min_durations[i - 1];
    for (int k = 0; k <= frames; ++k) {
      double run = 0.0;  // cost of frames j..k-1 on token i-1
      for (int j = k; j >= 0; --j) {
        if (k - j >= lo) {
          double v = best[(i - 1) * stride + j] + run;
          if (v <= best[i * stride + k]) {
            best[i * stride + k] = v;
            from[i * stride + k] = j;
          }
        }
        if (j > 0) run += cost[static_cast<size_t>(j - 1) * tokens + (i - 1)];
      }
    }
  }
  DurationSeq d(tokens);
  int k = frames;
  for (int i = tokens; i >= 1; --i) {
    int j = from[i * stride + k];
    d[i - 1] = k - j;
    k = j;
  }
  return d;
}

std::string FormatDurations(const Vocabulary &vocab, std::span<const int> text,
                            std::span<const int> durations) {
  if (text.size() != durations.size())
    throw Error("format_durations: length mismatch");
  std::string out;
  for (size_t i = 0; i < text.size(); ++i) {
    if (i) out += ' ';
    out += vocab.DisplayToken(text[i]) + ":" + std::to_string(durations[i]);
  }
  return out;
}

void ParseDurations(const Vocabulary &vocab, const std::string &line,
                    TextSeq *text, DurationSeq *durations) {
  text->clear();
  durations->clear();
  std::istringstream is(line);
  std::string pair;
  while (is >> pair) {
    size_t colon = pair.rfind(':');
    if (colon == std::string::npos || colon == 0)
      throw Error("malformed duration entry '" + pair + "'");
    std::string tok = pair.substr(0, colon);
    int id = (vocab.mode() == TokenMode::kCharacter && tok == "<sp>")
                 ? Vocabulary::kWordSeparator
                 : vocab.Find(tok);
    if (id <= 0) throw Error("unknown token in duration entry '" + pair + "'");
    text->push_back(id);
    durations->push_back(std::stoi(pair.substr(colon + 1)));
  }
}

void WriteDurationFile(const std::filesystem::path &path,
                       const Vocabulary &vocab,
                       const std::vector<TextSeq> &texts,
                       const std::vector<DurationSeq> &durations) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  for (size_t i = 0; i < texts.size(); ++i)
    os << FormatDurations(vocab, texts[i], durations[i]) << '\n';
}

}  // namespace duallab
