// duallab/ctc.cc

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

#include "duallab/ctc.h"

#include <cmath>
#include <limits>

namespace duallab {

namespace {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

}  // namespace

int CtcMinFrames(std::span<const int> target) {
  int n = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

CtcResult CtcLoss(const Tensor &log_probs, std::span<const int> target) {
  if (log_probs.rank() != 2 || log_probs.empty())
    throw ShapeError("ctc_loss: log_probs must be a non-empty K x V matrix");
  const int frames = log_probs.rows(), vocab = log_probs.cols();
  for (int label : target) {
    if (label == kCtcBlank) throw Error("ctc_loss: blank inside target");
    if (label < 0 || label >= vocab)
      throw Error("ctc_loss: label " + std::to_string(label) + " out of range");
  }
  if (frames < CtcMinFrames(target))
    throw Error("ctc_loss: target needs " + std::to_string(CtcMinFrames(target)) +
                " frames, input has " + std::to_string(frames));

  // Extended labels: blank, l1, blank, l2, ..., blank.
  const int states = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> ext(states, kCtcBlank);
  for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto lp = [&](int t, int s) { return log_probs.at(t, ext[s]); };
  auto can_skip = [&](int s) {
    return s >= 2 && ext[s] != kCtcBlank && ext[s] != ext[s - 2];
  };

  // alpha includes the emission at t; beta excludes it.
  std::vector<double> alpha(static_cast<size_t>(frames) * states, kLogZero);
  std::vector<double> beta(static_cast<size_t>(frames) * states, kLogZero);
  auto A = [&](int t, int s) -> double & { return alpha[static_cast<size_t>(t) * states + s]; };
  auto B = [&](int t, int s) -> double & { return beta[static_cast<size_t>(t) * states + s]; };

  A(0, 0) = lp(0, 0);
  if (states > 1) A(0, 1) = lp(0, 1);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < states; ++s) {
      double v = A(t - 1, s);
      if (s >= 1) v = LogAdd(v, A(t - 1, s - 1));
      if (can_skip(s)) v = LogAdd(v, A(t - 1, s - 2));
      if (v != kLogZero) A(t, s) = v + lp(t, s);
    }
  }

  B(frames - 1, states - 1) = 0.0;
  if (states > 1) B(frames - 1, states - 2) = 0.0;
  for (int t = frames - 2; t >= 0; --t) {
    for (int s = 0; s < states; ++s) {
      double v = B(t + 1, s) + lp(t + 1, s);
      if (s + 1 < states) v = LogAdd(v, B(t + 1, s + 1) + lp(t + 1, s + 1));
      if (s + 2 < states && can_skip(s + 2))
        v = LogAdd(v, B(t + 1, s + 2) + lp(t + 1, s + 2));
      B(t, s) = v;
    }
  }

  double log_p = A(frames - 1, states - 1);
  if (states > 1) log_p = LogAdd(log_p, A(frames - 1, states - 2));
  if (log_p == kLogZero) throw NumericError("ctc_loss: target has zero probability");

  CtcResult result;
  result.loss = -log_p;
  // d(-ln p)/d log y_t(v) = -sum_{s: ext[s]=v} alpha_t(s) beta_t(s) / p
  result.grad.assign(static_cast<size_t>(frames) * vocab, 0.0);
  for (int t = 0; t < frames; ++t)
    for (int s = 0; s < states; ++s) {
      double occ = A(t, s) + B(t, s);
      if (occ == kLogZero) continue;
      result.grad[static_cast<size_t>(t) * vocab + ext[s]] -= std::exp(occ - log_p);
    }
  return result;
}

Tensor CtcLossOp(const Tensor &log_probs, std::span<const int> target) {
  CtcResult r = CtcLoss(log_probs, target);
  return ExternalScalar(log_probs, r.loss, std::move(r.grad));
}

std::vector<int> CtcCollapse(std::span<const int> path) {
  std::vector<int> out;
  int prev = -1;
  for (int label : path) {
    if (label != prev && label != kCtcBlank) out.push_back(label);
    prev = label;
  }
  return out;
}

double CtcBruteForce(const Tensor &probs, std::span<const int> target,
                     double budget) {
  const int frames = probs.rows(), vocab = probs.cols();
  if (std::pow(static_cast<double>(vocab), frames) > budget)
    throw Error("ctc_brute_force: " + std::to_string(vocab) + "^" +
                std::to_string(frames) + " paths exceed the enumeration budget");
  std::vector<int> path(frames, 0);
  double total = 0.0;
  while (true) {
    if (CtcCollapse(path) == std::vector<int>(target.begin(), target.end())) {
      double p = 1.0;
      for (int t = 0; t < frames; ++t) p *= probs.at(t, path[t]);
      total += p;
    }
    int t = frames - 1;
    while (t >= 0 && ++path[t] == vocab) path[t--] = 0;
    if (t < 0) break;
  }
  return total;
}

std::vector<int> FrameArgmax(const Tensor &log_probs) {
  std::vector<int> out(log_probs.rows());
  for (int t = 0; t < log_probs.rows(); ++t) {
    int best = 0;
    for (int v = 1; v < log_probs.cols(); ++v)
      if (log_probs.at(t, v) > log_probs.at(t, best)) best = v;
    out[t] = best;
  }
  return out;
}

std::vector<int> CtcGreedyDecode(const Tensor &log_probs) {
  return CtcCollapse(FrameArgmax(log_probs));
}

}  // namespace duallab
