// duallab/models.cc

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

#include "duallab/models.h"

#include <numeric>

namespace duallab {

namespace {

/// `row` (1 x n) stacked k times.
Tensor RepeatRows(const Tensor &row, int k) {
  return Matmul(Tensor::Filled({k, 1}, 1.0), row);
}

Tensor Concat(std::initializer_list<Tensor> parts) {
  return ConcatLastAxis(std::span<const Tensor>(parts.begin(), parts.size()));
}

void RequireEven(int hidden, const char *what) {
  if (hidden % 2 != 0)
    throw Error(std::string(what) + ": hidden size must be even for a bidirectional encoder");
}

}  // namespace

// ---------------------------------------------------------------------------
// Reader

Reader::Reader(const Vocabulary &vocab, const ReaderConfig &config, uint64_t seed)
    : vocab_(vocab), config_(config) {
  Rng rng(DeriveSeed(seed, "reader"));
  int dim = config.channels;
  for (int i = 0; i < config.conv_layers; ++i) {
    convs_.push_back(TemporalConvParams::Create(
        params_, "reader.conv" + std::to_string(i), dim, config.conv_channels,
        config.conv_width, rng));
    dim = config.conv_channels;
  }
  for (int i = 0; i < config.gru_layers; ++i) {
    grus_.push_back(GruLayerParams::Create(params_, "reader.gru" + std::to_string(i),
                                           dim, config.hidden, true, rng));
    dim = grus_.back().output_dim();
  }
  output_ = LinearParams::Create(params_, "reader.out", dim, vocab.size(), rng);
}

Tensor Reader::Forward(const BoundParams &p, const Tensor &frames) const {
  if (frames.rank() != 2 || frames.cols() != config_.channels)
    throw ShapeError("reader: expected K x " + std::to_string(config_.channels) +
                     " frames, got " + ShapeString(frames.shape()));
  Tensor x = frames;
  for (const auto &conv : convs_) x = Relu(conv(p, x));
  for (const auto &gru : grus_) x = GruSequence(x, gru, p);
  return LogSoftmax(output_(p, x));
}

Tensor Reader::Forward(const Trace &trace) const {
  return Forward(params_.Bind(nullptr), trace.ToTensor());
}

std::vector<Tensor> Reader::ForwardBatch(const std::vector<Trace> &traces) const {
  BoundParams p = params_.Bind(nullptr);
  std::vector<Tensor> out;
  out.reserve(traces.size());
  for (const auto &t : traces) out.push_back(Forward(p, t.ToTensor()));
  return out;
}

// ---------------------------------------------------------------------------
// Generators

const char *GeneratorKindName(GeneratorKind kind) {
  return kind == GeneratorKind::kDuration ? "duration" : "attention";
}

GeneratorKind ParseGeneratorKind(const std::string &name) {
  if (name == "duration") return GeneratorKind::kDuration;
  if (name == "attention") return GeneratorKind::kAttention;
  throw Error("unknown generator '" + name + "' (expected duration|attention)");
}

void Generator::CreateGuideEncoder(Rng &rng) {
  guide1_ = LinearParams::Create(params_, "gen.guide1", config_.channels,
                                 config_.guide_dim, rng);
  guide2_ = LinearParams::Create(params_, "gen.guide2", config_.guide_dim,
                                 config_.guide_dim, rng);
}

Tensor Generator::EncodeGuide(const BoundParams &p, const Tensor &guide) const {
  if (guide.rows() != 1 || guide.cols() != config_.channels)
    throw ShapeError("generator: guide must be 1 x " +
                     std::to_string(config_.channels));
  return Tanh(guide2_(p, Tanh(guide1_(p, guide))));
}

DurationGenerator::DurationGenerator(const Vocabulary &vocab,
                                     const GeneratorConfig &config, uint64_t seed)
    : Generator(vocab, config) {
  RequireEven(config.hidden, "duration generator");
  Rng rng(DeriveSeed(seed, "generator.duration"));
  embedding_ = params_.Add("gen.embedding",
                           InitUniform({vocab.size(), config.embedding}, 1, rng));
  text_rnn_ = GruLayerParams::Create(params_, "gen.text_rnn", config.embedding,
                                     config.hidden / 2, true, rng);
  CreateGuideEncoder(rng);
  fusion_rnn_ = GruLayerParams::Create(params_, "gen.fusion_rnn",
                                       config.guide_dim + config.hidden,
                                       config.hidden, false, rng);
  dec1_ = LinearParams::Create(params_, "gen.dec1",
                               config.hidden + config.guide_dim + config.channels,
                               config.decoder_hidden, rng);
  dec2_ = LinearParams::Create(params_, "gen.dec2", config.decoder_hidden,
                               config.channels, rng);
}

Tensor DurationGenerator::Forward(const BoundParams &p, const TextSeq &text,
                                  const DurationSeq &durations,
                                  const Tensor &guide) const {
  if (text.empty()) throw Error("duration generator: empty text");
  TextSeq unrolled = Expand(text, durations);
  const int k = static_cast<int>(unrolled.size());
  Tensor text_features = GruSequence(GatherRows(p[embedding_], unrolled), text_rnn_, p);
  Tensor guide_rows = RepeatRows(EncodeGuide(p, guide), k);
  Tensor fused = GruSequence(Concat({guide_rows, text_features}), fusion_rnn_, p);
  Tensor hidden = Tanh(dec1_(p, Concat({fused, guide_rows, RepeatRows(guide, k)})));
  return Sigmoid(dec2_(p, hidden));
}

GeneratorLoss DurationGenerator::Loss(const BoundParams &p, const TextSeq &text,
                                      const DurationSeq &durations,
                                      const Trace &target, const Tensor &guide,
                                      Rng *) const {
  Tensor frames = Forward(p, text, durations, guide);
  Tensor truth = target.ToTensor();
  if (frames.rows() != truth.rows())
    throw ShapeError("duration generator: durations sum to " +
                     std::to_string(frames.rows()) + " frames, target has " +
                     std::to_string(truth.rows()));
  GeneratorLoss loss;
  loss.total = Scale(L1Distance(frames, truth), 1.0 / static_cast<double>(truth.size()));
  loss.l1 = loss.total.item();
  return loss;
}

Generation DurationGenerator::Generate(const TextSeq &text,
                                       const DurationSeq &durations,
                                       const Tensor &guide, int) const {
  Generation g;
  g.trace = Trace::FromTensor(Forward(params_.Bind(nullptr), text, durations, guide));
  g.alignment = OneHotAlignment(durations);
  g.stopped = true;
  return g;
}

AttentionGenerator::AttentionGenerator(const Vocabulary &vocab,
                                       const GeneratorConfig &config,
                                       uint64_t seed)
    : Generator(vocab, config) {
  RequireEven(config.hidden, "attention generator");
  Rng rng(DeriveSeed(seed, "generator.attention"));
  embedding_ = params_.Add("gen.embedding",
                           InitUniform({vocab.size(), config.embedding}, 1, rng));
  encoder_ = GruLayerParams::Create(params_, "gen.encoder", config.embedding,
                                    config.hidden / 2, true, rng);
  CreateGuideEncoder(rng);
  const int d = config.channels, m = config.hidden, g = config.guide_dim,
            hd = config.decoder_hidden;
  decoder_ = GruParams::Create(params_, "gen.decoder", d + m + g, hd, rng);
  attention_ = AttentionParams::Create(params_, "gen.attention", hd, m,
                                       config.attention, rng);
  out1_ = LinearParams::Create(params_, "gen.out1", hd + m + g + d, hd, rng);
  out2_ = LinearParams::Create(params_, "gen.out2", hd, d, rng);
  stop_ = LinearParams::Create(params_, "gen.stop", hd + m, 1, rng);
}

Tensor AttentionGenerator::Encode(const BoundParams &p, const TextSeq &text) const {
  if (text.empty()) throw Error("attention generator: empty text");
  return GruSequence(GatherRows(p[embedding_], text), encoder_, p);
}

AttentionGenerator::Decoded AttentionGenerator::Forward(
    const BoundParams &p, const TextSeq &text, const Tensor &guide,
    const Trace &teacher, Rng *dropout_rng) const {
  teacher.Validate();
  const int t_len = static_cast<int>(text.size());
  const int k_frames = teacher.frames, d = config_.channels;
  Tensor memory = Encode(p, text);
  Tensor keys = AttentionKeys(memory, attention_, p);
  Tensor guide_feat = EncodeGuide(p, guide);
  GruWeights cell = GruWeights::Pack(decoder_, p);

  Tensor h = Tensor::Zeros({1, config_.decoder_hidden});
  Tensor context = Tensor::Zeros({1, config_.hidden});
  Tensor prev_w = Tensor::Zeros({1, t_len});
  Tensor cum_w = prev_w;
  std::vector<Tensor> states, contexts;
  std::vector<std::vector<double>> rows;
  const double keep = 1.0 - config_.dropout;
  for (int k = 0; k < k_frames; ++k) {
    std::vector<double> prev_frame(d, 0.0);
    if (k > 0)
      for (int c = 0; c < d; ++c) prev_frame[c] = teacher.at(k - 1, c);
    if (dropout_rng && config_.dropout > 0)
      for (double &v : prev_frame)
        v = Uniform(*dropout_rng, 0.0, 1.0) < config_.dropout ? 0.0 : v / keep;
    h = GruCell(Concat({Tensor::Row(prev_frame), context, guide_feat}), h, cell);
    AttentionOutput att =
        LocationSensitiveAttention(h, memory, keys, prev_w, cum_w, attention_, p);
    context = att.context;
    cum_w = Add(cum_w, att.weights);
    prev_w = att.weights;
    rows.emplace_back(att.weights.data().begin(), att.weights.data().end());
    states.push_back(h);
    contexts.push_back(context);
  }
  Tensor all_h = ConcatRows(states), all_ctx = ConcatRows(contexts);
  Tensor guide_rows = RepeatRows(guide_feat, k_frames);
  Tensor hidden = Tanh(out1_(p, Concat({all_h, all_ctx, guide_rows,
                                         RepeatRows(guide, k_frames)})));
  Decoded out;
  out.frames = Sigmoid(out2_(p, hidden));
  out.stop_logits = stop_(p, Concat({all_h, all_ctx}));
  out.alignment = AlignmentMatrix::FromFrameRows(rows);
  return out;
}

Generation AttentionGenerator::Infer(const TextSeq &text, const Tensor &guide,
                                     int max_frames) const {
  if (max_frames < 1) throw Error("attention generator: max_frames must be >= 1");
  BoundParams p = params_.Bind(nullptr);
  const int t_len = static_cast<int>(text.size());
  Tensor memory = Encode(p, text);
  Tensor keys = AttentionKeys(memory, attention_, p);
  Tensor guide_feat = EncodeGuide(p, guide);
  GruWeights cell = GruWeights::Pack(decoder_, p);

  Tensor h = Tensor::Zeros({1, config_.decoder_hidden});
  Tensor context = Tensor::Zeros({1, config_.hidden});
  Tensor prev_frame = Tensor::Zeros({1, config_.channels});
  Tensor prev_w = Tensor::Zeros({1, t_len});
  Tensor cum_w = prev_w;
  std::vector<Tensor> frames;
  std::vector<std::vector<double>> rows;
  Generation g;
  for (int k = 0; k < max_frames; ++k) {
    h = GruCell(Concat({prev_frame, context, guide_feat}), h, cell);
    AttentionOutput att =
        LocationSensitiveAttention(h, memory, keys, prev_w, cum_w, attention_, p);
    context = att.context;
    cum_w = Add(cum_w, att.weights);
    prev_w = att.weights;
    rows.emplace_back(att.weights.data().begin(), att.weights.data().end());
    Tensor frame = Sigmoid(out2_(p, Tanh(out1_(p, Concat({h, context, guide_feat, guide})))));
    frames.push_back(frame);
    prev_frame = frame;
    double stop_logit = stop_(p, Concat({h, context})).item();
    if (stop_logit > 0.0) {  // sigmoid > 0.5
      g.stopped = true;
      break;
    }
  }
  g.trace = Trace::FromTensor(ConcatRows(frames));
  g.alignment = AlignmentMatrix::FromFrameRows(rows);
  return g;
}

GeneratorLoss AttentionGenerator::Loss(const BoundParams &p, const TextSeq &text,
                                       const DurationSeq &, const Trace &target,
                                       const Tensor &guide, Rng *rng) const {
  Decoded dec = Forward(p, text, guide, target, rng);
  Tensor truth = target.ToTensor();
  std::vector<double> stop_target(target.frames, 0.0);
  stop_target.back() = 1.0;
  const double n_values = static_cast<double>(truth.size());
  const double n_frames = static_cast<double>(target.frames);
  Tensor l1 = Scale(L1Distance(dec.frames, truth), 1.0 / n_values);
  Tensor stop = Scale(BceWithLogits(dec.stop_logits,
                                    Tensor::Matrix(target.frames, 1, std::move(stop_target))),
                      1.0 / n_frames);
  GeneratorLoss loss;
  loss.total = Add(l1, Scale(stop, config_.stop_weight));
  loss.l1 = l1.item();
  loss.stop = stop.item();
  return loss;
}

Generation AttentionGenerator::Generate(const TextSeq &text, const DurationSeq &,
                                        const Tensor &guide, int max_frames) const {
  return Infer(text, guide, max_frames);
}

std::unique_ptr<Generator> MakeGenerator(GeneratorKind kind,
                                         const Vocabulary &vocab,
                                         const GeneratorConfig &config,
                                         uint64_t seed) {
  if (kind == GeneratorKind::kDuration)
    return std::make_unique<DurationGenerator>(vocab, config, seed);
  return std::make_unique<AttentionGenerator>(vocab, config, seed);
}

}  // namespace duallab
