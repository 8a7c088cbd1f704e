// duallab/train.h

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

#ifndef DUALLAB_TRAIN_H_
#define DUALLAB_TRAIN_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "duallab/config.h"
#include "duallab/metrics.h"
#include "duallab/models.h"
#include "duallab/synthdata.h"

namespace duallab {

class TrainingAbort : public Error {
 public:
  using Error::Error;
};

enum class TrainMode { kBaseline, kDual };
const char *TrainModeName(TrainMode mode);
TrainMode ParseTrainMode(const std::string &name);

// ----- Optimization. -----

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW) when > 0
  double decay_ratio = 0.1;   // lr multiplier applied by Decay()
};

/// Adam with bias correction; decoupled weight decay when configured.
class Adam {
 public:
  Adam(const ParamStore &params, const OptimizerConfig &config);

  /// Applies one update from the gradients held in `params`.  Throws
  /// NumericError on a non-finite gradient, before touching any value.
  void Step(ParamStore &params);
  void Decay() { lr_ *= config_.decay_ratio; }

  double lr() const { return lr_; }
  int steps() const { return steps_; }
  const OptimizerConfig &config() const { return config_; }

 private:
  OptimizerConfig config_;
  double lr_;
  int steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Rescales all gradients of `params` so that their global L2 norm is at most
/// `max_norm` (no-op when max_norm <= 0).  Returns the norm before clipping.
double ClipGradNorm(ParamStore &params, double max_norm);

/// Fires when the loss has not improved on the best value by more than
/// `threshold` for `patience` consecutive updates.  The counter restarts
/// after firing.
class PlateauDetector {
 public:
  PlateauDetector(int patience = 3, double threshold = 1e-4)
      : patience_(patience), threshold_(threshold) {}
  bool Update(double loss);
  double best() const { return best_; }
  int stale() const { return stale_; }

 private:
  int patience_;
  double threshold_;
  double best_ = 0.0;
  bool has_best_ = false;
  int stale_ = 0;
};

// ----- Configuration. -----

struct DualConfig {
  double alpha = 1.0;
  int stage1_epochs = 0;  // 0: switch at the first reader plateau
  int total_epochs = 60;
  int batch_size = 16;
  int unpaired_batch_size = 16;
  OptimizerConfig reader_opt{1e-3, 0.9, 0.999, 1e-8, 1e-2, 0.5};
  OptimizerConfig generator_opt{1e-3, 0.9, 0.999, 1e-8, 0.0, 0.1};
  double clip_norm = 5.0;
  int plateau_patience = 3;
  double plateau_threshold = 1e-4;
  /// Share of the whole non-eval pool used as unpaired data; negative means
  /// every unpaired utterance.  Realized as a prefix of each unpaired split.
  double unpaired_fraction = -1.0;
  /// Free-running generation limit.
  int max_generate_frames = 100;
  /// Template re-segmentation passes over pseudo durations (duration
  /// generator only; 0 keeps the label runs).
  int duration_refinement = 2;
  /// Evaluate on the first n eval utterances only (0 = all).
  int eval_limit = 0;
  uint64_t seed = 1;
  ReaderConfig reader;
  GeneratorConfig generator;

  void Validate() const;
};

/// Reads the keys of a training config; unknown keys are rejected.
DualConfig DualConfigFromKeyValues(const KeyValueFile &kv);

// ----- Data. -----

struct Example {
  std::string id;
  int speaker = 0;
  TextSeq text;          // with silence tokens; empty for lip-only
  DurationSeq durations;  // empty for lip-only
  std::optional<Trace> trace;
};

/// A loaded corpus with traces in memory.
class Dataset {
 public:
  static Dataset Load(const std::filesystem::path &corpus_dir);
  /// In-memory corpus, as MakeCorpus would write it (for tests).
  static Dataset Generate(const CorpusConfig &config);

  const Vocabulary &vocab() const { return vocab_; }
  const CorpusConfig &corpus() const { return corpus_; }
  const std::vector<Example> &split(Split s) const;

  /// Keeps the first n entries of the text-only and lip-only splits.
  void TruncateUnpaired(size_t text_only, size_t lip_only);

  /// Guide frame for training: a uniformly drawn frame of the example's own
  /// trace, or of a same-speaker trace for text-only examples.
  Tensor TrainingGuide(const Example &e, Rng &rng) const;
  /// Guide frame for generation: the first frame of the example's own trace,
  /// or of a same-speaker trace for text-only examples.
  Tensor InferenceGuide(const Example &e, Rng &rng) const;

 private:
  Dataset() : vocab_(Vocabulary::Characters()) {}
  const Trace &GuideTrace(const Example &e, Rng &rng) const;
  void Index();

  Vocabulary vocab_;
  CorpusConfig corpus_;
  std::vector<Example> splits_[4];
  std::vector<std::vector<std::pair<int, int>>> speaker_traces_;  // (split, index)
};

// ----- Steps. -----

struct LossBreakdown {
  double L_p_lg = 0.0;
  double L_p_lr = 0.0;
  double L_u_lg = 0.0;
  double L_u_lr = 0.0;

  /// (L_p_lg + L_p_lr) + alpha (L_u_lg + L_u_lr).
  double Total(double alpha) const {
    return (L_p_lg + L_p_lr) + alpha * (L_u_lg + L_u_lr);
  }
  LossBreakdown &operator+=(const LossBreakdown &o);
  LossBreakdown Scaled(double f) const;
};

/// Pseudo text for a lip-only trace from the reader's frame-wise labels,
/// with durations from the label runs: each emitted token owns its frames up
/// to the next emission, leading frames go to a start silence, and trailing
/// frames past a typical token length go to an end silence.  Silence tokens
/// are only added when they get at least one frame.  Empty text when nothing
/// is emitted.
struct PseudoText {
  TextSeq text;
  DurationSeq durations;
};
PseudoText PseudoTextFromLabels(std::span<const int> frame_labels);

/// Re-times `pseudo` against `trace`: each pass generates frames with the
/// current durations, averages them per token into a template and
/// re-segments the trace monotonically by L1 distance to the templates.
/// Silence tokens may shrink to nothing (and are then dropped); other tokens
/// keep at least one frame.
PseudoText RefineDurations(const DurationGenerator &generator,
                           const PseudoText &pseudo, const Trace &trace,
                           const Tensor &guide, int passes);

struct SupervisedResult {
  LossBreakdown losses;  // L_p_* only
  GradBuffer reader;
  GradBuffer generator;
};

/// Mean CTC loss of the reader and mean generator loss over a paired batch;
/// each model's gradient comes from its own loss only.
SupervisedResult SupervisedStep(const Reader &reader, const Generator &generator,
                                const Dataset &data,
                                std::span<const Example *const> batch,
                                uint64_t seed);

struct DualResult {
  LossBreakdown losses;  // L_u_* only, unscaled by alpha
  /// Gradients of alpha * L_u_lr and alpha * L_u_lg, split by model.  The
  /// producer of each pseudo input is bound on the same tape, so
  /// generator_from_lr and reader_from_lg hold whatever reaches it (zero).
  GradBuffer reader_from_lr, generator_from_lr;
  GradBuffer generator_from_lg, reader_from_lg;
  int text_skipped = 0;  // pseudo trace too short for the target
  int lip_skipped = 0;   // empty pseudo text
  bool lip_zeroed = false;
};

DualResult DualStep(const Reader &reader, const Generator &generator,
                    const Dataset &data,
                    std::span<const Example *const> text_batch,
                    std::span<const Example *const> lip_batch, double alpha,
                    int max_generate_frames, int duration_refinement,
                    uint64_t seed);

// ----- Evaluation. -----

struct EvalItem {
  std::string id;
  std::string ref;
  std::string hyp;
  double l1 = 0.0;
  double psnr = 0.0;
  Generation generation;
};

struct EvalResult {
  EvalReport report;
  double reader_loss = 0.0;     // mean CTC loss
  double generator_loss = 0.0;  // mean training objective, teacher-forced
  std::vector<EvalItem> items;
};

/// Reader CER/WER and generator L1/PSNR over `examples`.  The duration
/// generator uses the reference durations; the attention generator runs free
/// and its output is padded or truncated to the reference length.
EvalResult Evaluate(const Reader &reader, const Generator &generator,
                    const Dataset &data, std::span<const Example> examples,
                    int max_generate_frames, bool keep_generations = false);

// ----- Checkpoints. -----

struct Checkpoint {
  std::unique_ptr<Reader> reader;
  std::unique_ptr<Generator> generator;
};

/// Writes reader.bin/.idx, generator.bin/.idx and meta.txt into `dir`.
void SaveCheckpoint(const std::filesystem::path &dir, const Reader &reader,
                    const Generator &generator);
Checkpoint LoadCheckpoint(const std::filesystem::path &dir);

// ----- Training run. -----

struct TrainOptions {
  DualConfig config;
  TrainMode mode = TrainMode::kDual;
  GeneratorKind generator = GeneratorKind::kDuration;
  std::filesystem::path run_dir;
  /// Progress lines (may be null).
  std::ostream *log = nullptr;
};

struct EpochLog {
  int epoch = 0;
  int stage = 1;
  LossBreakdown losses;
  double total = 0.0;
  EvalReport eval;
  double eval_reader_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int stage_switch_epoch = 0;  // first stage-2 epoch, 0 if none
  int best_reader_epoch = 0;
  int best_generator_epoch = 0;
  EvalReport best;  // eval of the retained checkpoint
  int text_skipped = 0;
  int lip_skipped = 0;
  bool dual_disabled = false;  // dual mode without unpaired data
};

std::string MetricCsvHeader();
std::string MetricCsvRow(const EpochLog &e);

/// Two-stage schedule.  Writes metrics.csv, checkpoint/ (best reader by eval
/// CER, best generator by eval L1), last/ and eval.csv into run_dir.
/// Throws TrainingAbort on a non-finite loss or gradient.
TrainResult TrainRun(const Dataset &data, const TrainOptions &options);

/// Number of worker threads: DUALLAB_THREADS when set, else the hardware
/// concurrency.
int WorkerThreads();

/// Runs fn(i) for i in [0, n) on up to WorkerThreads() threads.
void ParallelFor(size_t n, const std::function<void(size_t)> &fn);

}  // namespace duallab

#endif  // DUALLAB_TRAIN_H_
