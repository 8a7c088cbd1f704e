// duallab/models.h

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

#ifndef DUALLAB_MODELS_H_
#define DUALLAB_MODELS_H_

#include <cstdint>
#include <memory>
#include <vector>

#include "duallab/align.h"
#include "duallab/nn.h"
#include "duallab/tensor.h"
#include "duallab/text.h"
#include "duallab/trace.h"

namespace duallab {

struct ReaderConfig {
  int channels = 8;
  int conv_channels = 32;
  int conv_layers = 2;
  int conv_width = 5;
  int hidden = 64;
  int gru_layers = 2;
};

/// Temporal convolution stack, bidirectional GRU stack and a linear layer
/// onto the vocabulary (blank included), followed by log-softmax.
class Reader {
 public:
  Reader(const Vocabulary &vocab, const ReaderConfig &config, uint64_t seed);

  const ReaderConfig &config() const { return config_; }
  const Vocabulary &vocab() const { return vocab_; }
  ParamStore &params() { return params_; }
  const ParamStore &params() const { return params_; }

  /// K x V log-probabilities.
  Tensor Forward(const BoundParams &p, const Tensor &frames) const;
  /// Untracked forward with the current parameters.
  Tensor Forward(const Trace &trace) const;
  std::vector<Tensor> ForwardBatch(const std::vector<Trace> &traces) const;

 private:
  Vocabulary vocab_;
  ReaderConfig config_;
  ParamStore params_;
  std::vector<TemporalConvParams> convs_;
  std::vector<GruLayerParams> grus_;
  LinearParams output_;
};

enum class GeneratorKind { kDuration, kAttention };
const char *GeneratorKindName(GeneratorKind kind);
GeneratorKind ParseGeneratorKind(const std::string &name);

struct GeneratorConfig {
  int channels = 8;
  int embedding = 32;
  int hidden = 64;
  int guide_dim = 32;
  int decoder_hidden = 64;
  AttentionConfig attention;
  double stop_weight = 0.1;
  /// Dropout on the fed-back previous frame of the attention decoder.
  double dropout = 0.0;
};

struct GeneratorLoss {
  Tensor total;       // tracked scalar used for the gradient
  double l1 = 0.0;    // mean absolute error per value
  double stop = 0.0;  // mean stop-flag cross-entropy (attention model)
};

struct Generation {
  Trace trace;
  AlignmentMatrix alignment;  // attention model only
  bool stopped = false;       // stop flag fired before max_frames
};

/// Text (+ guide frame) to frame sequence.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual GeneratorKind kind() const = 0;
  const GeneratorConfig &config() const { return config_; }
  const Vocabulary &vocab() const { return vocab_; }
  ParamStore &params() { return params_; }
  const ParamStore &params() const { return params_; }

  /// Loss against `target`.  `durations` is required by the duration model
  /// and ignored by the attention model.  `rng` drives training-time dropout
  /// and may be null.
  virtual GeneratorLoss Loss(const BoundParams &p, const TextSeq &text,
                             const DurationSeq &durations, const Trace &target,
                             const Tensor &guide, Rng *rng) const = 0;

  /// Untracked generation with the current parameters.
  virtual Generation Generate(const TextSeq &text, const DurationSeq &durations,
                              const Tensor &guide, int max_frames) const = 0;

 protected:
  Generator(const Vocabulary &vocab, const GeneratorConfig &config)
      : vocab_(vocab), config_(config) {}

  /// Two tanh layers over the guide frame.
  Tensor EncodeGuide(const BoundParams &p, const Tensor &guide) const;
  void CreateGuideEncoder(Rng &rng);

  Vocabulary vocab_;
  GeneratorConfig config_;
  ParamStore params_;
  LinearParams guide1_, guide2_;
};

/// Expander, text encoder over the unrolled text, guide encoder, fusion RNN
/// and frame decoder fed with the guide features at every frame.
class DurationGenerator : public Generator {
 public:
  DurationGenerator(const Vocabulary &vocab, const GeneratorConfig &config,
                    uint64_t seed);

  GeneratorKind kind() const override { return GeneratorKind::kDuration; }

  /// K x D frames in (0,1), K = sum of durations.
  Tensor Forward(const BoundParams &p, const TextSeq &text,
                 const DurationSeq &durations, const Tensor &guide) const;

  GeneratorLoss Loss(const BoundParams &p, const TextSeq &text,
                     const DurationSeq &durations, const Trace &target,
                     const Tensor &guide, Rng *rng) const override;
  Generation Generate(const TextSeq &text, const DurationSeq &durations,
                      const Tensor &guide, int max_frames) const override;

 private:
  int embedding_ = -1;
  GruLayerParams text_rnn_;
  GruLayerParams fusion_rnn_;
  LinearParams dec1_, dec2_;
};

/// Text encoder with location-sensitive attention and an autoregressive GRU
/// decoder that emits one frame and a stop logit per step.
class AttentionGenerator : public Generator {
 public:
  AttentionGenerator(const Vocabulary &vocab, const GeneratorConfig &config,
                     uint64_t seed);

  GeneratorKind kind() const override { return GeneratorKind::kAttention; }

  struct Decoded {
    Tensor frames;       // K x D
    Tensor stop_logits;  // K x 1
    AlignmentMatrix alignment;
  };

  /// Teacher-forced decoding: step k is fed frame k-1 of `teacher`.
  Decoded Forward(const BoundParams &p, const TextSeq &text,
                  const Tensor &guide, const Trace &teacher,
                  Rng *dropout_rng = nullptr) const;

  /// Free-running decoding until the stop flag exceeds 0.5 or max_frames.
  Generation Infer(const TextSeq &text, const Tensor &guide,
                   int max_frames) const;

  GeneratorLoss Loss(const BoundParams &p, const TextSeq &text,
                     const DurationSeq &durations, const Trace &target,
                     const Tensor &guide, Rng *rng) const override;
  Generation Generate(const TextSeq &text, const DurationSeq &durations,
                      const Tensor &guide, int max_frames) const override;

 private:
  struct Step;
  Tensor Encode(const BoundParams &p, const TextSeq &text) const;

  int embedding_ = -1;
  GruLayerParams encoder_;
  GruParams decoder_;
  AttentionParams attention_;
  LinearParams out1_, out2_, stop_;
};

std::unique_ptr<Generator> MakeGenerator(GeneratorKind kind,
                                         const Vocabulary &vocab,
                                         const GeneratorConfig &config,
                                         uint64_t seed);

}  // namespace duallab

#endif  // DUALLAB_MODELS_H_
