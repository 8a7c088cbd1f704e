// duallab/nn.h

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

#ifndef DUALLAB_NN_H_
#define DUALLAB_NN_H_

#include <optional>
#include <string>

#include "duallab/random.h"
#include "duallab/tensor.h"

namespace duallab {

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Tensor InitUniform(Shape shape, int fan_in, Rng &rng);

// ----- Linear -----

Tensor Linear(const Tensor &x, const Tensor &weight, const Tensor &bias);

struct LinearParams {
  int weight = -1;  // in x out
  int bias = -1;    // 1 x out
  int in = 0;
  int out = 0;

  static LinearParams Create(ParamStore &store, const std::string &name, int in,
                             int out, Rng &rng);
  Tensor operator()(const BoundParams &p, const Tensor &x) const {
    return Linear(x, p[weight], p[bias]);
  }
};

// ----- Temporal convolution -----

/// Same-padded stride-1 convolution along the frame axis.  `kernels` is
/// (width*D) x D' with tap t (offset t - width/2) in rows t*D .. t*D+D-1.
Tensor TemporalConv(const Tensor &trace, const Tensor &kernels,
                    const Tensor &bias, int width);

struct TemporalConvParams {
  int kernels = -1;
  int bias = -1;
  int width = 0;
  int in = 0;
  int out = 0;

  static TemporalConvParams Create(ParamStore &store, const std::string &name,
                                   int in, int out, int width, Rng &rng);
  Tensor operator()(const BoundParams &p, const Tensor &x) const {
    return TemporalConv(x, p[kernels], p[bias], width);
  }
};

// ----- GRU -----

/// Parameter ids of one GRU direction.  W_* are input x H, U_* are H x H,
/// b_* are 1 x H.
struct GruParams {
  int w_z = -1, w_r = -1, w_h = -1;
  int u_z = -1, u_r = -1, u_h = -1;
  int b_z = -1, b_r = -1, b_h = -1;
  int input_dim = 0;
  int hidden = 0;

  static GruParams Create(ParamStore &store, const std::string &name,
                          int input_dim, int hidden, Rng &rng);
};

/// Gate matrices packed for one forward pass: w = [W_z W_r W_h],
/// b = [b_z b_r b_h], u_zr = [U_z U_r].
struct GruWeights {
  Tensor w, b, u_zr, u_h;
  int hidden = 0;

  static GruWeights Pack(const GruParams &params, const BoundParams &p);
};

/// z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r),
/// c = tanh(W_h x + U_h (r*h) + b_h), h' = (1-z)*h + z*c.
Tensor GruCell(const Tensor &x, const Tensor &h, const GruWeights &weights);
/// Same step with the input term already projected: `projected` is the
/// 1 x 3H row x*w + b.
Tensor GruStep(const Tensor &projected, const Tensor &h,
               const GruWeights &weights);

struct GruLayerParams {
  GruParams forward;
  std::optional<GruParams> backward;

  int output_dim() const {
    return forward.hidden * (backward ? 2 : 1);
  }
  static GruLayerParams Create(ParamStore &store, const std::string &name,
                               int input_dim, int hidden, bool bidirectional,
                               Rng &rng);
};

/// K x input -> K x H (or K x 2H, forward states then backward states) from a
/// zero initial state.
Tensor GruSequence(const Tensor &xs, const GruLayerParams &layer,
                   const BoundParams &p);

// ----- Location-sensitive attention -----

struct AttentionConfig {
  int attention_dim = 64;
  int filters = 8;
  int filter_width = 7;
};

/// Scores e_i = v . tanh(W_q q + W_m m_i + P conv([prev, cum])_i + b).  The
/// location filters see two channels per position: the previous step's
/// weights and the running sum of all previous weights.
struct AttentionParams {
  int query_proj = -1;    // Q x A
  int memory_proj = -1;   // M x A
  int bias = -1;          // 1 x A
  int location_conv = -1; // (width*2) x F
  int location_proj = -1; // F x A
  int score = -1;         // A x 1
  int query_dim = 0;
  int memory_dim = 0;
  AttentionConfig config;

  static AttentionParams Create(ParamStore &store, const std::string &name,
                                int query_dim, int memory_dim,
                                const AttentionConfig &config, Rng &rng);
};

struct AttentionOutput {
  Tensor context;  // 1 x M
  Tensor weights;  // 1 x T
};

/// memory W_m, computed once per sequence.
Tensor AttentionKeys(const Tensor &memory, const AttentionParams &params,
                     const BoundParams &p);

AttentionOutput LocationSensitiveAttention(const Tensor &query,
                                           const Tensor &memory,
                                           const Tensor &keys,
                                           const Tensor &prev_weights,
                                           const Tensor &cum_weights,
                                           const AttentionParams &params,
                                           const BoundParams &p);

/// Single-call form: keys are computed here and the cumulative weights are
/// taken equal to `prev_weights`.
AttentionOutput LocationSensitiveAttention(const Tensor &query,
                                           const Tensor &memory,
                                           const Tensor &prev_weights,
                                           const AttentionParams &params,
                                           const BoundParams &p);

}  // namespace duallab

#endif  // DUALLAB_NN_H_
