// duallab/ctc.h

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

#ifndef DUALLAB_CTC_H_
#define DUALLAB_CTC_H_

#include <span>
#include <vector>

#include "duallab/tensor.h"

namespace duallab {

/// Blank symbol index in every vocabulary.
inline constexpr int kCtcBlank = 0;

struct CtcResult {
  double loss = 0.0;          // -ln p(target | input)
  std::vector<double> grad;   // K x V, d loss / d log_probs
};

/// Minimum number of frames that can emit `target`: its length plus one per
/// adjacent repeat.
int CtcMinFrames(std::span<const int> target);

/// Forward-backward over the blank-interleaved label sequence, in log space.
/// `log_probs` is K x V.  Throws when the target contains the blank, an
/// out-of-range label, or cannot fit in K frames.
CtcResult CtcLoss(const Tensor &log_probs, std::span<const int> target);

/// Same loss as a tape operation (scalar output, gradient flows to
/// `log_probs`).
Tensor CtcLossOp(const Tensor &log_probs, std::span<const int> target);

/// Sum over every length-K path whose collapse equals `target` of the product
/// of per-frame probabilities.  `probs` is K x V (not logs).  Throws when
/// V^K exceeds `budget`.
double CtcBruteForce(const Tensor &probs, std::span<const int> target,
                     double budget = 1e7);

/// Merge repeats then drop blanks.
std::vector<int> CtcCollapse(std::span<const int> path);

/// Frame-wise argmax (ties to the lowest index).
std::vector<int> FrameArgmax(const Tensor &log_probs);

/// Best-path decoding: per-frame argmax then collapse.
std::vector<int> CtcGreedyDecode(const Tensor &log_probs);

}  // namespace duallab

#endif  // DUALLAB_CTC_H_
