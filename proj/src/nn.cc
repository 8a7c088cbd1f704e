// duallab/nn.cc

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

#include "duallab/nn.h"

#include <cmath>
#include <vector>

namespace duallab {

Tensor InitUniform(Shape shape, int fan_in, Rng &rng) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(n);
  for (double &v : values) v = Uniform(rng, -bound, bound);
  return Tensor(std::move(shape), std::move(values));
}

Tensor Linear(const Tensor &x, const Tensor &weight, const Tensor &bias) {
  return AddRow(Matmul(x, weight), bias);
}

LinearParams LinearParams::Create(ParamStore &store, const std::string &name,
                                  int in, int out, Rng &rng) {
  LinearParams lp;
  lp.in = in;
  lp.out = out;
  lp.weight = store.Add(name + ".weight", InitUniform({in, out}, in, rng));
  lp.bias = store.Add(name + ".bias", InitUniform({1, out}, in, rng));
  return lp;
}

Tensor TemporalConv(const Tensor &trace, const Tensor &kernels,
                    const Tensor &bias, int width) {
  if (trace.empty()) throw ShapeError("temporal_conv: empty trace");
  if (width <= 0 || width % 2 == 0)
    throw ShapeError("temporal_conv: width must be odd, got " +
                     std::to_string(width));
  if (kernels.rows() != width * trace.cols())
    throw ShapeError("temporal_conv: kernel rows " +
                     std::to_string(kernels.rows()) + " do not match width " +
                     std::to_string(width) + " x channels " +
                     std::to_string(trace.cols()));
  return AddRow(Matmul(Unfold(trace, width), kernels), bias);
}

TemporalConvParams TemporalConvParams::Create(ParamStore &store,
                                              const std::string &name, int in,
                                              int out, int width, Rng &rng) {
  if (width <= 0 || width % 2 == 0)
    throw ShapeError("temporal_conv: width must be odd, got " +
                     std::to_string(width));
  TemporalConvParams cp;
  cp.in = in;
  cp.out = out;
  cp.width = width;
  int fan_in = in * width;
  cp.kernels = store.Add(name + ".kernels", InitUniform({fan_in, out}, fan_in, rng));
  cp.bias = store.Add(name + ".bias", InitUniform({1, out}, fan_in, rng));
  return cp;
}

GruParams GruParams::Create(ParamStore &store, const std::string &name,
                            int input_dim, int hidden, Rng &rng) {
  GruParams g;
  g.input_dim = input_dim;
  g.hidden = hidden;
  auto add = [&](const char *suffix, int rows) {
    return store.Add(name + "." + suffix, InitUniform({rows, hidden}, hidden, rng));
  };
  g.w_z = add("W_z", input_dim);
  g.w_r = add("W_r", input_dim);
  g.w_h = add("W_h", input_dim);
  g.u_z = add("U_z", hidden);
  g.u_r = add("U_r", hidden);
  g.u_h = add("U_h", hidden);
  g.b_z = add("b_z", 1);
  g.b_r = add("b_r", 1);
  g.b_h = add("b_h", 1);
  return g;
}

GruWeights GruWeights::Pack(const GruParams &g, const BoundParams &p) {
  GruWeights w;
  w.hidden = g.hidden;
  const Tensor ws[] = {p[g.w_z], p[g.w_r], p[g.w_h]};
  const Tensor bs[] = {p[g.b_z], p[g.b_r], p[g.b_h]};
  const Tensor us[] = {p[g.u_z], p[g.u_r]};
  w.w = ConcatLastAxis(ws);
  w.b = ConcatLastAxis(bs);
  w.u_zr = ConcatLastAxis(us);
  w.u_h = p[g.u_h];
  return w;
}

Tensor GruStep(const Tensor &projected, const Tensor &h,
               const GruWeights &weights) {
  int hd = weights.hidden;
  if (projected.rows() != 1 || projected.cols() != 3 * hd || h.rows() != 1 ||
      h.cols() != hd)
    throw ShapeError("gru: state " + ShapeString(h.shape()) + " / input " +
                     ShapeString(projected.shape()) + " do not match hidden " +
                     std::to_string(hd));
  Tensor gates = Sigmoid(Add(Slice(projected, 1, 0, 2 * hd), Matmul(h, weights.u_zr)));
  Tensor z = Slice(gates, 1, 0, hd);
  Tensor r = Slice(gates, 1, hd, 2 * hd);
  Tensor candidate = Tanh(Add(Slice(projected, 1, 2 * hd, 3 * hd),
                              Matmul(Mul(r, h), weights.u_h)));
  return Add(h, Mul(z, Sub(candidate, h)));
}

Tensor GruCell(const Tensor &x, const Tensor &h, const GruWeights &weights) {
  if (x.rows() != 1 || x.cols() != weights.w.rows())
    throw ShapeError("gru_cell: input " + ShapeString(x.shape()) +
                     " does not match W " + ShapeString(weights.w.shape()));
  return GruStep(Linear(x, weights.w, weights.b), h, weights);
}

GruLayerParams GruLayerParams::Create(ParamStore &store, const std::string &name,
                                      int input_dim, int hidden,
                                      bool bidirectional, Rng &rng) {
  GruLayerParams layer;
  layer.forward = GruParams::Create(store, name + ".fwd", input_dim, hidden, rng);
  if (bidirectional)
    layer.backward = GruParams::Create(store, name + ".bwd", input_dim, hidden, rng);
  return layer;
}

namespace {

Tensor RunDirection(const Tensor &xs, const GruParams &params,
                    const BoundParams &p, bool reverse) {
  GruWeights w = GruWeights::Pack(params, p);
  Tensor projected = Linear(xs, w.w, w.b);
  int k_frames = xs.rows();
  std::vector<Tensor> states(k_frames);
  Tensor h = Tensor::Zeros({1, params.hidden});
  for (int step = 0; step < k_frames; ++step) {
    int k = reverse ? k_frames - 1 - step : step;
    h = GruStep(Slice(projected, 0, k, k + 1), h, w);
    states[k] = h;
  }
  return ConcatRows(states);
}

}  // namespace

Tensor GruSequence(const Tensor &xs, const GruLayerParams &layer,
                   const BoundParams &p) {
  if (xs.empty() || xs.rows() == 0) throw ShapeError("gru_sequence: no frames");
  if (xs.cols() != layer.forward.input_dim)
    throw ShapeError("gru_sequence: input dim " + std::to_string(xs.cols()) +
                     " != " + std::to_string(layer.forward.input_dim));
  Tensor fwd = RunDirection(xs, layer.forward, p, false);
  if (!layer.backward) return fwd;
  Tensor bwd = RunDirection(xs, *layer.backward, p, true);
  const Tensor both[] = {fwd, bwd};
  return ConcatLastAxis(both);
}

AttentionParams AttentionParams::Create(ParamStore &store,
                                        const std::string &name, int query_dim,
                                        int memory_dim,
                                        const AttentionConfig &config,
                                        Rng &rng) {
  if (config.filter_width % 2 == 0)
    throw ShapeError("attention filter width must be odd");
  AttentionParams a;
  a.query_dim = query_dim;
  a.memory_dim = memory_dim;
  a.config = config;
  int dim = config.attention_dim;
  int loc_in = config.filter_width * 2;
  a.query_proj = store.Add(name + ".query", InitUniform({query_dim, dim}, query_dim, rng));
  a.memory_proj = store.Add(name + ".memory", InitUniform({memory_dim, dim}, memory_dim, rng));
  a.bias = store.Add(name + ".bias", Tensor::Zeros({1, dim}));
  a.location_conv = store.Add(name + ".location_conv",
                              InitUniform({loc_in, config.filters}, loc_in, rng));
  a.location_proj = store.Add(name + ".location_proj",
                              InitUniform({config.filters, dim}, config.filters, rng));
  a.score = store.Add(name + ".score", InitUniform({dim, 1}, dim, rng));
  return a;
}

Tensor AttentionKeys(const Tensor &memory, const AttentionParams &params,
                     const BoundParams &p) {
  if (memory.empty()) throw ShapeError("attention: empty memory");
  return Matmul(memory, p[params.memory_proj]);
}

AttentionOutput LocationSensitiveAttention(const Tensor &query,
                                           const Tensor &memory,
                                           const Tensor &keys,
                                           const Tensor &prev_weights,
                                           const Tensor &cum_weights,
                                           const AttentionParams &params,
                                           const BoundParams &p) {
  if (memory.empty() || memory.rows() == 0)
    throw ShapeError("attention: empty memory");
  int t_len = memory.rows();
  if (prev_weights.cols() != t_len || cum_weights.cols() != t_len)
    throw ShapeError("attention: weight vectors do not match memory length");
  const Tensor location_in[] = {Transpose(prev_weights), Transpose(cum_weights)};
  Tensor location = Matmul(
      Matmul(Unfold(ConcatLastAxis(location_in), params.config.filter_width),
             p[params.location_conv]),
      p[params.location_proj]);
  Tensor q = Add(Matmul(query, p[params.query_proj]), p[params.bias]);
  Tensor energies = Matmul(Tanh(AddRow(Add(keys, location), q)), p[params.score]);
  Tensor weights = Softmax(Transpose(energies));
  return {Matmul(weights, memory), weights};
}

AttentionOutput LocationSensitiveAttention(const Tensor &query,
                                           const Tensor &memory,
                                           const Tensor &prev_weights,
                                           const AttentionParams &params,
                                           const BoundParams &p) {
  Tensor keys = AttentionKeys(memory, params, p);
  return LocationSensitiveAttention(query, memory, keys, prev_weights,
                                    prev_weights, params, p);
}

}  // namespace duallab
