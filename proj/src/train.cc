// duallab/train.cc

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

#include "duallab/train.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "duallab/ctc.h"

namespace duallab {

namespace fs = std::filesystem;

const char *TrainModeName(TrainMode mode) {
  return mode == TrainMode::kBaseline ? "baseline" : "dual";
}

TrainMode ParseTrainMode(const std::string &name) {
  if (name == "baseline") return TrainMode::kBaseline;
  if (name == "dual") return TrainMode::kDual;
  throw Error("unknown mode '" + name + "' (expected baseline|dual)");
}

// ---------------------------------------------------------------------------
// Threads

int WorkerThreads() {
  if (const char *env = std::getenv("DUALLAB_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void ParallelFor(size_t n, const std::function<void(size_t)> &fn) {
  const size_t threads = std::min<size_t>(WorkerThreads(), n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto &t : pool) t.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Optimization

Adam::Adam(const ParamStore &params, const OptimizerConfig &config)
    : config_(config), lr_(config.lr) {
  for (size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params.value(i).size(), 0.0);
    v_.emplace_back(params.value(i).size(), 0.0);
  }
}

void Adam::Step(ParamStore &params) {
  if (params.size() != m_.size())
    throw ShapeError("adam: parameter count changed");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params.grad(i).size() != m_[i].size())
      throw ShapeError("adam: gradient shape mismatch for " + params.param(i).name);
    for (double g : params.grad(i))
      if (!std::isfinite(g))
        throw NumericError("adam: non-finite gradient in " + params.param(i).name);
  }
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, steps_);
  const double bc2 = 1.0 - std::pow(b2, steps_);
  for (size_t i = 0; i < params.size(); ++i) {
    const Tensor &old = params.value(i);
    std::vector<double> value(old.data().begin(), old.data().end());
    const std::vector<double> &grad = params.grad(i);
    std::vector<double> &m = m_[i], &v = v_[i];
    for (size_t j = 0; j < value.size(); ++j) {
      const double g = grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double step = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config_.eps);
      value[j] -= lr_ * step + lr_ * config_.weight_decay * old[j];
    }
    params.SetValue(i, Tensor(old.shape(), std::move(value)));
  }
}

double ClipGradNorm(ParamStore &params, double max_norm) {
  const double norm = params.GradNorm();
  if (max_norm > 0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (size_t i = 0; i < params.size(); ++i)
      for (double &g : params.grad(i)) g *= f;
  }
  return norm;
}

bool PlateauDetector::Update(double loss) {
  if (!has_best_ || loss < best_ - threshold_) {
    best_ = loss;
    has_best_ = true;
    stale_ = 0;
    return false;
  }
  if (++stale_ >= patience_) {
    stale_ = 0;
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Configuration

void DualConfig::Validate() const {
  auto fail = [](const std::string &what) { throw ConfigError("train config: " + what); };
  if (!(alpha >= 0)) fail("alpha must be >= 0");
  if (total_epochs < 1) fail("total_epochs must be >= 1");
  if (stage1_epochs < 0) fail("stage1_epochs must be >= 0");
  if (batch_size < 1 || unpaired_batch_size < 1) fail("batch sizes must be >= 1");
  for (const OptimizerConfig *o : {&reader_opt, &generator_opt}) {
    if (!(o->lr > 0)) fail("learning rates must be > 0");
    if (!(o->decay_ratio > 0 && o->decay_ratio <= 1)) fail("decay ratios must be in (0, 1]");
    if (o->weight_decay < 0) fail("weight decay must be >= 0");
  }
  if (plateau_patience < 1) fail("plateau_patience must be >= 1");
  if (max_generate_frames < 1) fail("max_generate_frames must be >= 1");
  if (duration_refinement < 0) fail("duration_refinement must be >= 0");
  if (eval_limit < 0) fail("eval_limit must be >= 0");
  if (unpaired_fraction > 1) fail("unpaired_fraction must be <= 1");
}

DualConfig DualConfigFromKeyValues(const KeyValueFile &kv) {
  DualConfig c;
  kv.Get("alpha", &c.alpha);
  kv.Get("stage1_epochs", &c.stage1_epochs);
  kv.Get("total_epochs", &c.total_epochs);
  kv.Get("batch_size", &c.batch_size);
  kv.Get("unpaired_batch_size", &c.unpaired_batch_size);
  for (auto [prefix, opt] : {std::pair{"reader", &c.reader_opt},
                             std::pair{"generator", &c.generator_opt}}) {
    std::string p = prefix;
    kv.Get(p + "_lr", &opt->lr);
    kv.Get(p + "_weight_decay", &opt->weight_decay);
    kv.Get(p + "_decay", &opt->decay_ratio);
    kv.Get("adam_beta1", &opt->beta1);
    kv.Get("adam_beta2", &opt->beta2);
    kv.Get("adam_eps", &opt->eps);
  }
  kv.Get("clip_norm", &c.clip_norm);
  kv.Get("plateau_patience", &c.plateau_patience);
  kv.Get("plateau_threshold", &c.plateau_threshold);
  kv.Get("unpaired_fraction", &c.unpaired_fraction);
  kv.Get("max_generate_frames", &c.max_generate_frames);
  kv.Get("duration_refinement", &c.duration_refinement);
  kv.Get("eval_limit", &c.eval_limit);
  kv.Get("seed", &c.seed);
  kv.Get("reader.conv_channels", &c.reader.conv_channels);
  kv.Get("reader.conv_layers", &c.reader.conv_layers);
  kv.Get("reader.conv_width", &c.reader.conv_width);
  kv.Get("reader.hidden", &c.reader.hidden);
  kv.Get("reader.gru_layers", &c.reader.gru_layers);
  kv.Get("generator.embedding", &c.generator.embedding);
  kv.Get("generator.hidden", &c.generator.hidden);
  kv.Get("generator.guide_dim", &c.generator.guide_dim);
  kv.Get("generator.decoder_hidden", &c.generator.decoder_hidden);
  kv.Get("generator.stop_weight", &c.generator.stop_weight);
  kv.Get("generator.dropout", &c.generator.dropout);
  kv.Get("attention.dim", &c.generator.attention.attention_dim);
  kv.Get("attention.filters", &c.generator.attention.filters);
  kv.Get("attention.filter_width", &c.generator.attention.filter_width);
  kv.RejectUnknown();
  c.Validate();
  return c;
}

// ---------------------------------------------------------------------------
// Data

const std::vector<Example> &Dataset::split(Split s) const {
  return splits_[static_cast<int>(s)];
}

void Dataset::Index() {
  speaker_traces_.assign(corpus_.speakers, {});
  for (Split s : {Split::kPaired, Split::kLipOnly})
    for (size_t i = 0; i < split(s).size(); ++i) {
      const Example &e = split(s)[i];
      if (e.speaker < 0 || e.speaker >= corpus_.speakers)
        throw Error("dataset: speaker out of range in " + e.id);
      speaker_traces_[e.speaker].push_back({static_cast<int>(s), static_cast<int>(i)});
    }
}

namespace {

void CheckExample(const Example &e, int channels) {
  if (e.trace) {
    e.trace->Validate();
    if (e.trace->channels != channels)
      throw Error("dataset: " + e.id + " has " + std::to_string(e.trace->channels) +
                  " channels, corpus has " + std::to_string(channels));
  }
  if (e.text.size() != e.durations.size())
    throw Error("dataset: " + e.id + " text and durations differ in length");
  if (e.trace && !e.text.empty()) {
    int total = std::accumulate(e.durations.begin(), e.durations.end(), 0);
    if (total != e.trace->frames)
      throw Error("dataset: " + e.id + " durations sum to " + std::to_string(total) +
                  " but the trace has " + std::to_string(e.trace->frames) + " frames");
  }
}

}  // namespace

Dataset Dataset::Load(const fs::path &dir) {
  Dataset d;
  d.corpus_ = ReadCorpusInfo(dir / "corpus.json");
  d.vocab_ = Vocabulary::ForMode(d.corpus_.mode);
  CorpusManifest manifest = CorpusManifest::Read(dir / "manifest.jsonl");
  manifest.Validate();
  for (const auto &m : manifest.entries) {
    Example e;
    e.id = m.id;
    e.speaker = m.speaker;
    if (m.text) e.text = d.vocab_.Parse(*m.text);
    if (m.durations) e.durations = *m.durations;
    if (m.trace) {
      e.trace = ReadTraceFile(dir / *m.trace);
      e.trace->speaker = m.speaker;
    }
    CheckExample(e, d.corpus_.channels);
    d.splits_[static_cast<int>(m.split)].push_back(std::move(e));
  }
  d.Index();
  return d;
}

Dataset Dataset::Generate(const CorpusConfig &config) {
  Dataset d;
  d.corpus_ = config;
  d.vocab_ = Vocabulary::ForMode(config.mode);
  std::vector<GeneratedUtterance> utts;
  CorpusManifest manifest = BuildCorpus(config, &utts);
  for (size_t i = 0; i < utts.size(); ++i) {
    const ManifestEntry &m = manifest.entries[i];
    Example e;
    e.id = m.id;
    e.speaker = m.speaker;
    if (m.text) {
      e.text = utts[i].text;
      e.durations = utts[i].durations;
    }
    if (m.trace) e.trace = std::move(utts[i].trace);
    d.splits_[static_cast<int>(m.split)].push_back(std::move(e));
  }
  d.Index();
  return d;
}

void Dataset::TruncateUnpaired(size_t text_only, size_t lip_only) {
  auto &t = splits_[static_cast<int>(Split::kTextOnly)];
  auto &l = splits_[static_cast<int>(Split::kLipOnly)];
  if (t.size() > text_only) t.resize(text_only);
  if (l.size() > lip_only) l.resize(lip_only);
  Index();
}

const Trace &Dataset::GuideTrace(const Example &e, Rng &rng) const {
  if (e.trace) return *e.trace;
  if (e.speaker < 0 || e.speaker >= static_cast<int>(speaker_traces_.size()) ||
      speaker_traces_[e.speaker].empty())
    throw Error("dataset: no trace of speaker " + std::to_string(e.speaker) +
                " to take a guide frame from");
  const auto &pool = speaker_traces_[e.speaker];
  auto [s, i] = pool[UniformInt(rng, 0, static_cast<int>(pool.size()) - 1)];
  return *splits_[s][i].trace;
}

Tensor Dataset::TrainingGuide(const Example &e, Rng &rng) const {
  const Trace &t = GuideTrace(e, rng);
  return t.Frame(UniformInt(rng, 0, t.frames - 1));
}

Tensor Dataset::InferenceGuide(const Example &e, Rng &rng) const {
  return GuideTrace(e, rng).Frame(0);
}

// ---------------------------------------------------------------------------
// Steps

LossBreakdown &LossBreakdown::operator+=(const LossBreakdown &o) {
  L_p_lg += o.L_p_lg;
  L_p_lr += o.L_p_lr;
  L_u_lg += o.L_u_lg;
  L_u_lr += o.L_u_lr;
  return *this;
}

LossBreakdown LossBreakdown::Scaled(double f) const {
  return {L_p_lg * f, L_p_lr * f, L_u_lg * f, L_u_lr * f};
}

PseudoText PseudoTextFromLabels(std::span<const int> labels) {
  const int k = static_cast<int>(labels.size());
  std::vector<int> starts, tokens;
  int prev = kCtcBlank;
  for (int f = 0; f < k; ++f) {
    int l = labels[f];
    if (l == Vocabulary::kStartSilence || l == Vocabulary::kEndSilence) l = kCtcBlank;
    if (l != kCtcBlank && l != prev) {
      starts.push_back(f);
      tokens.push_back(l);
    }
    prev = l;
  }
  PseudoText p;
  if (tokens.empty()) return p;
  const int n = static_cast<int>(tokens.size());
  if (starts[0] > 0) {
    p.text.push_back(Vocabulary::kStartSilence);
    p.durations.push_back(starts[0]);
  }
  for (int i = 0; i + 1 < n; ++i) {
    p.text.push_back(tokens[i]);
    p.durations.push_back(starts[i + 1] - starts[i]);
  }
  const int rest = k - starts.back();
  int typical = rest;
  if (n > 1)
    typical = static_cast<int>(std::lround((starts.back() - starts[0]) / (n - 1.0)));
  const int last = std::clamp(typical, 1, rest);
  p.text.push_back(tokens.back());
  p.durations.push_back(last);
  if (rest > last) {
    p.text.push_back(Vocabulary::kEndSilence);
    p.durations.push_back(rest - last);
  }
  return p;
}

PseudoText RefineDurations(const DurationGenerator &generator,
                           const PseudoText &pseudo, const Trace &trace,
                           const Tensor &guide, int passes) {
  if (pseudo.text.empty() || passes <= 0) return pseudo;
  TextSeq text = pseudo.text;
  DurationSeq durations = pseudo.durations;
  if (text.front() != Vocabulary::kStartSilence) {
    text.insert(text.begin(), Vocabulary::kStartSilence);
    durations.insert(durations.begin(), 0);
  }
  if (text.back() != Vocabulary::kEndSilence) {
    text.push_back(Vocabulary::kEndSilence);
    durations.push_back(0);
  }
  const int n = static_cast<int>(text.size());
  const int dims = trace.channels;
  std::vector<int> min_durations(n);
  for (int i = 0; i < n; ++i)
    min_durations[i] =
        text[i] == Vocabulary::kStartSilence || text[i] == Vocabulary::kEndSilence ? 0 : 1;

  auto compact = [&](PseudoText *out) {
    out->text.clear();
    out->durations.clear();
    for (int i = 0; i < n; ++i)
      if (durations[i] > 0) {
        out->text.push_back(text[i]);
        out->durations.push_back(durations[i]);
      }
  };
  PseudoText current;
  for (int pass = 0; pass < passes; ++pass) {
    compact(&current);
    Trace generated = generator.Generate(current.text, current.durations, guide,
                                         trace.frames).trace;
    std::vector<double> templates(static_cast<size_t>(n) * dims, 0.0);
    int frame = 0;
    for (int i = 0; i < n; ++i) {
      double *t = &templates[static_cast<size_t>(i) * dims];
      if (durations[i] == 0) {
        // An absent silence falls back to the trace's opening frame.
        for (int c = 0; c < dims; ++c) t[c] = trace.at(0, c);
        continue;
      }
      for (int r = 0; r < durations[i]; ++r, ++frame)
        for (int c = 0; c < dims; ++c) t[c] += generated.at(frame, c) / durations[i];
    }
    std::vector<double> cost(static_cast<size_t>(trace.frames) * n);
    for (int k = 0; k < trace.frames; ++k)
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < dims; ++c)
          s += std::abs(trace.at(k, c) - templates[static_cast<size_t>(i) * dims + c]);
        cost[static_cast<size_t>(k) * n + i] = s;
      }
    durations = MonotoneSegmentation(cost, trace.frames, min_durations);
  }
  compact(&current);
  return current;
}

namespace {

void Accumulate(GradBuffer &dst, const GradBuffer &src, double w) {
  for (size_t i = 0; i < dst.size(); ++i)
    for (size_t j = 0; j < dst[i].size(); ++j) dst[i][j] += w * src[i][j];
}

struct ItemGrads {
  bool used = false;
  double loss = 0.0;
  GradBuffer own, other;
};

}  // namespace

SupervisedResult SupervisedStep(const Reader &reader, const Generator &generator,
                                const Dataset &data,
                                std::span<const Example *const> batch,
                                uint64_t seed) {
  if (batch.empty()) throw Error("supervised_step: empty batch");
  const size_t n = batch.size();
  std::vector<ItemGrads> r(n), g(n);
  ParallelFor(n, [&](size_t i) {
    const Example &e = *batch[i];
    if (!e.trace || e.text.empty())
      throw Error("supervised_step: " + e.id + " is not a paired example");
    {
      ComputationRecord rec;
      RecordScope scope(&rec);
      BoundParams p = reader.params().Bind(&rec);
      Tensor loss = CtcLossOp(reader.Forward(p, e.trace->ToTensor()), StripSilence(e.text));
      rec.Backward(loss);
      r[i].loss = loss.item();
      r[i].own = reader.params().CollectGrads(rec, p);
    }
    {
      Rng rng(DeriveSeed(seed, i));
      Tensor guide = data.TrainingGuide(e, rng);
      ComputationRecord rec;
      RecordScope scope(&rec);
      BoundParams p = generator.params().Bind(&rec);
      GeneratorLoss loss = generator.Loss(p, e.text, e.durations, *e.trace, guide, &rng);
      rec.Backward(loss.total);
      g[i].loss = loss.total.item();
      g[i].own = generator.params().CollectGrads(rec, p);
    }
  });
  SupervisedResult out;
  out.reader = reader.params().ZeroGradBuffer();
  out.generator = generator.params().ZeroGradBuffer();
  const double w = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    Accumulate(out.reader, r[i].own, w);
    Accumulate(out.generator, g[i].own, w);
    out.losses.L_p_lr += w * r[i].loss;
    out.losses.L_p_lg += w * g[i].loss;
  }
  return out;
}

DualResult DualStep(const Reader &reader, const Generator &generator,
                    const Dataset &data,
                    std::span<const Example *const> text_batch,
                    std::span<const Example *const> lip_batch, double alpha,
                    int max_generate_frames, int duration_refinement,
                    uint64_t seed) {
  if (text_batch.empty() || lip_batch.empty())
    throw Error("dual_step: empty unpaired batch");
  if (!(alpha >= 0)) throw Error("dual_step: alpha must be >= 0");
  DualResult out;
  out.reader_from_lr = reader.params().ZeroGradBuffer();
  out.reader_from_lg = reader.params().ZeroGradBuffer();
  out.generator_from_lr = generator.params().ZeroGradBuffer();
  out.generator_from_lg = generator.params().ZeroGradBuffer();

  // Generated trace -> reader.
  std::vector<ItemGrads> t(text_batch.size());
  ParallelFor(text_batch.size(), [&](size_t i) {
    const Example &e = *text_batch[i];
    if (e.text.empty()) throw Error("dual_step: " + e.id + " has no text");
    Rng rng(DeriveSeed(seed, "text" + std::to_string(i)));
    Tensor guide = data.InferenceGuide(e, rng);
    TextSeq target = StripSilence(e.text);
    ComputationRecord rec;
    RecordScope scope(&rec);
    BoundParams pr = reader.params().Bind(&rec);
    BoundParams pg = generator.params().Bind(&rec);
    Generation pseudo = generator.Generate(e.text, e.durations, guide, max_generate_frames);
    if (pseudo.trace.frames < CtcMinFrames(target)) return;
    Tensor loss = CtcLossOp(reader.Forward(pr, pseudo.trace.ToTensor()), target);
    rec.Backward(loss);
    t[i].used = true;
    t[i].loss = loss.item();
    t[i].own = reader.params().CollectGrads(rec, pr);
    t[i].other = generator.params().CollectGrads(rec, pg);
  });
  int used = 0;
  for (const auto &it : t) used += it.used;
  out.text_skipped = static_cast<int>(t.size()) - used;
  for (const auto &it : t) {
    if (!it.used) continue;
    const double w = 1.0 / used;
    out.losses.L_u_lr += w * it.loss;
    Accumulate(out.reader_from_lr, it.own, alpha * w);
    Accumulate(out.generator_from_lr, it.other, alpha * w);
  }

  // Recognized text -> generator.
  std::vector<ItemGrads> l(lip_batch.size());
  ParallelFor(lip_batch.size(), [&](size_t i) {
    const Example &e = *lip_batch[i];
    if (!e.trace) throw Error("dual_step: " + e.id + " has no trace");
    Rng rng(DeriveSeed(seed, "lip" + std::to_string(i)));
    Tensor guide = data.TrainingGuide(e, rng);
    ComputationRecord rec;
    RecordScope scope(&rec);
    BoundParams pr = reader.params().Bind(&rec);
    BoundParams pg = generator.params().Bind(&rec);
    PseudoText pseudo = PseudoTextFromLabels(FrameArgmax(reader.Forward(*e.trace)));
    if (pseudo.text.empty()) return;
    if (const auto *dg = dynamic_cast<const DurationGenerator *>(&generator))
      pseudo = RefineDurations(*dg, pseudo, *e.trace, guide, duration_refinement);
    GeneratorLoss loss =
        generator.Loss(pg, pseudo.text, pseudo.durations, *e.trace, guide, &rng);
    rec.Backward(loss.total);
    l[i].used = true;
    l[i].loss = loss.total.item();
    l[i].own = generator.params().CollectGrads(rec, pg);
    l[i].other = reader.params().CollectGrads(rec, pr);
  });
  used = 0;
  for (const auto &it : l) used += it.used;
  out.lip_skipped = static_cast<int>(l.size()) - used;
  if (2 * out.lip_skipped > static_cast<int>(l.size())) {
    out.lip_zeroed = true;
    return out;
  }
  for (const auto &it : l) {
    if (!it.used) continue;
    const double w = 1.0 / used;
    out.losses.L_u_lg += w * it.loss;
    Accumulate(out.generator_from_lg, it.own, alpha * w);
    Accumulate(out.reader_from_lg, it.other, alpha * w);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalResult Evaluate(const Reader &reader, const Generator &generator,
                    const Dataset &data, std::span<const Example> examples,
                    int max_generate_frames, bool keep_generations) {
  if (examples.empty()) throw Error("evaluate: no eval utterances");
  const Vocabulary &vocab = data.vocab();
  struct Item {
    ErrorCount chars, words;
    double ctc = 0.0;
    double gen_loss = 0.0;
    bool adjusted = false;
    EvalItem item;
  };
  std::vector<Item> items(examples.size());
  ParallelFor(examples.size(), [&](size_t i) {
    const Example &e = examples[i];
    if (!e.trace || e.text.empty())
      throw Error("evaluate: " + e.id + " lacks text or trace");
    Item &it = items[i];
    TextSeq ref = StripSilence(e.text);
    Tensor log_probs = reader.Forward(*e.trace);
    std::vector<int> hyp = CtcGreedyDecode(log_probs);
    it.chars = TokenErrors(vocab, ref, hyp);
    it.words = WordErrors(vocab, ref, hyp);
    it.ctc = CtcLoss(log_probs, ref).loss;
    it.item.id = e.id;
    it.item.ref = vocab.Render(ref);
    it.item.hyp = vocab.Render(StripSilence(hyp));

    Rng rng(DeriveSeed(0, e.id));
    Tensor guide = data.InferenceGuide(e, rng);
    it.gen_loss = generator
                      .Loss(generator.params().Bind(nullptr), e.text, e.durations,
                            *e.trace, guide, nullptr)
                      .total.item();
    Generation gen = generator.Generate(e.text, e.durations, guide, max_generate_frames);
    Trace scored = MatchLength(gen.trace, e.trace->frames, &it.adjusted);
    it.item.l1 = MeanL1(*e.trace, scored);
    it.item.psnr = PsnrTrace(*e.trace, scored);
    if (keep_generations) it.item.generation = std::move(gen);
  });
  EvalResult out;
  ErrorCount chars, words;
  double l1 = 0.0, psnr = 0.0, ctc = 0.0, gen_loss = 0.0;
  for (auto &it : items) {
    chars += it.chars;
    words += it.words;
    l1 += it.item.l1;
    psnr += it.item.psnr;
    ctc += it.ctc;
    gen_loss += it.gen_loss;
    out.report.length_adjusted += it.adjusted;
    out.items.push_back(std::move(it.item));
  }
  const double n = static_cast<double>(items.size());
  out.report.cer = chars.rate();
  out.report.wer = words.rate();
  out.report.mean_l1 = l1 / n;
  out.report.mean_psnr = psnr / n;
  out.report.n_utterances = static_cast<int>(items.size());
  out.report.phoneme = vocab.mode() == TokenMode::kPhoneme;
  out.reader_loss = ctc / n;
  out.generator_loss = gen_loss / n;
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

void WriteMeta(const fs::path &dir, const Vocabulary &vocab, const Reader &reader,
               const Generator &generator, uint64_t seed) {
  std::ofstream os(dir / "meta.txt");
  if (!os) throw Error("cannot write " + (dir / "meta.txt").string());
  const ReaderConfig &r = reader.config();
  const GeneratorConfig &g = generator.config();
  os << "token_mode = " << TokenModeName(vocab.mode()) << '\n'
     << "vocab_size = " << vocab.size() << '\n'
     << "generator = " << GeneratorKindName(generator.kind()) << '\n'
     << "seed = " << seed << '\n'
     << "reader.channels = " << r.channels << '\n'
     << "reader.conv_channels = " << r.conv_channels << '\n'
     << "reader.conv_layers = " << r.conv_layers << '\n'
     << "reader.conv_width = " << r.conv_width << '\n'
     << "reader.hidden = " << r.hidden << '\n'
     << "reader.gru_layers = " << r.gru_layers << '\n'
     << "generator.channels = " << g.channels << '\n'
     << "generator.embedding = " << g.embedding << '\n'
     << "generator.hidden = " << g.hidden << '\n'
     << "generator.guide_dim = " << g.guide_dim << '\n'
     << "generator.decoder_hidden = " << g.decoder_hidden << '\n'
     << "generator.stop_weight = " << g.stop_weight << '\n'
     << "generator.dropout = " << g.dropout << '\n'
     << "attention.dim = " << g.attention.attention_dim << '\n'
     << "attention.filters = " << g.attention.filters << '\n'
     << "attention.filter_width = " << g.attention.filter_width << '\n';
}

void SaveReader(const fs::path &dir, const Reader &reader) {
  reader.params().Save(dir / "reader.bin", dir / "reader.idx");
}

void SaveGenerator(const fs::path &dir, const Generator &generator) {
  generator.params().Save(dir / "generator.bin", dir / "generator.idx");
}

}  // namespace

void SaveCheckpoint(const fs::path &dir, const Reader &reader,
                    const Generator &generator) {
  fs::create_directories(dir);
  WriteMeta(dir, reader.vocab(), reader, generator, 0);
  SaveReader(dir, reader);
  SaveGenerator(dir, generator);
}

Checkpoint LoadCheckpoint(const fs::path &dir) {
  if (!fs::exists(dir / "meta.txt"))
    throw Error("no checkpoint in " + dir.string());
  KeyValueFile kv = KeyValueFile::Load(dir / "meta.txt");
  std::string mode, kind;
  int vocab_size = 0;
  uint64_t seed = 0;
  ReaderConfig r;
  GeneratorConfig g;
  kv.Get("token_mode", &mode);
  kv.Get("vocab_size", &vocab_size);
  kv.Get("generator", &kind);
  kv.Get("seed", &seed);
  kv.Get("reader.channels", &r.channels);
  kv.Get("reader.conv_channels", &r.conv_channels);
  kv.Get("reader.conv_layers", &r.conv_layers);
  kv.Get("reader.conv_width", &r.conv_width);
  kv.Get("reader.hidden", &r.hidden);
  kv.Get("reader.gru_layers", &r.gru_layers);
  kv.Get("generator.channels", &g.channels);
  kv.Get("generator.embedding", &g.embedding);
  kv.Get("generator.hidden", &g.hidden);
  kv.Get("generator.guide_dim", &g.guide_dim);
  kv.Get("generator.decoder_hidden", &g.decoder_hidden);
  kv.Get("generator.stop_weight", &g.stop_weight);
  kv.Get("generator.dropout", &g.dropout);
  kv.Get("attention.dim", &g.attention.attention_dim);
  kv.Get("attention.filters", &g.attention.filters);
  kv.Get("attention.filter_width", &g.attention.filter_width);
  kv.RejectUnknown();
  Vocabulary vocab = Vocabulary::ForMode(ParseTokenMode(mode));
  if (vocab.size() != vocab_size)
    throw Error("checkpoint: vocabulary size " + std::to_string(vocab_size) +
                " does not match the " + mode + " vocabulary");
  Checkpoint c;
  c.reader = std::make_unique<Reader>(vocab, r, seed);
  c.generator = MakeGenerator(ParseGeneratorKind(kind), vocab, g, seed);
  c.reader->params().Load(dir / "reader.bin", dir / "reader.idx");
  c.generator->params().Load(dir / "generator.bin", dir / "generator.idx");
  return c;
}

// ---------------------------------------------------------------------------
// Training run

std::string MetricCsvHeader() {
  return "epoch,stage,L_p_lg,L_p_lr,L_u_lg,L_u_lr,total,eval_cer,eval_wer,eval_l1,eval_psnr";
}

std::string MetricCsvRow(const EpochLog &e) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g",
                e.epoch, e.stage, e.losses.L_p_lg, e.losses.L_p_lr, e.losses.L_u_lg,
                e.losses.L_u_lr, e.total, e.eval.cer, e.eval.wer, e.eval.mean_l1,
                e.eval.mean_psnr);
  return buf;
}

namespace {

/// Endless shuffled stream over a pool of examples.
class BatchStream {
 public:
  BatchStream(std::vector<const Example *> pool, uint64_t seed)
      : pool_(std::move(pool)), rng_(seed) {}
  bool empty() const { return pool_.empty(); }
  std::vector<const Example *> Next(size_t n) {
    std::vector<const Example *> out;
    while (out.size() < std::min(n, pool_.size())) {
      if (pos_ == 0) std::shuffle(pool_.begin(), pool_.end(), rng_);
      out.push_back(pool_[pos_]);
      pos_ = (pos_ + 1) % pool_.size();
    }
    return out;
  }

 private:
  std::vector<const Example *> pool_;
  Rng rng_;
  size_t pos_ = 0;
};

std::vector<const Example *> Pointers(const std::vector<Example> &v, size_t n) {
  std::vector<const Example *> out;
  for (size_t i = 0; i < std::min(n, v.size()); ++i) out.push_back(&v[i]);
  return out;
}

size_t UnpairedCount(const DualConfig &c, const Dataset &data, Split s) {
  const size_t size = data.split(s).size();
  if (c.unpaired_fraction < 0) return size;
  const double available = 1.0 - data.corpus().paired_fraction;
  if (available <= 0) return 0;
  const double share = std::min(1.0, c.unpaired_fraction / available);
  return static_cast<size_t>(std::lround(share * static_cast<double>(size)));
}

}  // namespace

TrainResult TrainRun(const Dataset &data, const TrainOptions &options) {
  using Clock = std::chrono::steady_clock;
  const DualConfig &cfg = options.config;
  cfg.Validate();
  std::ostream *log = options.log;
  const fs::path &run = options.run_dir;
  fs::create_directories(run / "checkpoint");
  fs::create_directories(run / "last");

  const Vocabulary &vocab = data.vocab();
  ReaderConfig rc = cfg.reader;
  rc.channels = data.corpus().channels;
  GeneratorConfig gc = cfg.generator;
  gc.channels = data.corpus().channels;
  Reader reader(vocab, rc, cfg.seed);
  std::unique_ptr<Generator> generator = MakeGenerator(options.generator, vocab, gc, cfg.seed);

  std::vector<const Example *> paired = Pointers(data.split(Split::kPaired), SIZE_MAX);
  if (paired.empty()) throw Error("train: corpus has no paired utterances");
  const auto &eval_all = data.split(Split::kEval);
  if (eval_all.empty()) throw Error("train: corpus has no eval utterances");
  std::span<const Example> eval(eval_all);
  if (cfg.eval_limit > 0 && static_cast<size_t>(cfg.eval_limit) < eval.size())
    eval = eval.first(cfg.eval_limit);

  TrainResult result;
  const bool dual = options.mode == TrainMode::kDual;
  BatchStream text_stream(
      dual ? Pointers(data.split(Split::kTextOnly), UnpairedCount(cfg, data, Split::kTextOnly))
           : std::vector<const Example *>{},
      DeriveSeed(cfg.seed, "text_batches"));
  BatchStream lip_stream(
      dual ? Pointers(data.split(Split::kLipOnly), UnpairedCount(cfg, data, Split::kLipOnly))
           : std::vector<const Example *>{},
      DeriveSeed(cfg.seed, "lip_batches"));
  if (dual && (text_stream.empty() || lip_stream.empty() || cfg.alpha == 0)) {
    result.dual_disabled = true;
    if (log) *log << "warning: dual mode without usable unpaired data; training the baseline\n";
  }

  Adam reader_opt(reader.params(), cfg.reader_opt);
  Adam generator_opt(generator->params(), cfg.generator_opt);
  PlateauDetector reader_plateau(cfg.plateau_patience, cfg.plateau_threshold);
  PlateauDetector generator_plateau(cfg.plateau_patience, cfg.plateau_threshold);
  Rng order(DeriveSeed(cfg.seed, "paired_batches"));

  std::ofstream csv(run / "metrics.csv", std::ios::binary);
  if (!csv) throw Error("cannot write " + (run / "metrics.csv").string());
  csv << MetricCsvHeader() << '\n';
  WriteMeta(run / "checkpoint", vocab, reader, *generator, cfg.seed);
  WriteMeta(run / "last", vocab, reader, *generator, cfg.seed);

  double best_cer = std::numeric_limits<double>::infinity();
  double best_l1 = std::numeric_limits<double>::infinity();
  int stage = 1;
  uint64_t step = 0;
  const size_t b = static_cast<size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.total_epochs; ++epoch) {
    auto t0 = Clock::now();
    std::shuffle(paired.begin(), paired.end(), order);
    LossBreakdown sum;
    int steps = 0;
    for (size_t at = 0; at < paired.size(); at += b, ++step) {
      std::span<const Example *const> batch(paired.data() + at,
                                            std::min(b, paired.size() - at));
      const uint64_t step_seed = DeriveSeed(cfg.seed, step);
      try {
        reader.params().ZeroGrad();
        generator->params().ZeroGrad();
        SupervisedResult sup = SupervisedStep(reader, *generator, data, batch, step_seed);
        reader.params().AddGrads(sup.reader);
        generator->params().AddGrads(sup.generator);
        LossBreakdown losses = sup.losses;
        if (stage == 2) {
          auto text_batch = text_stream.Next(cfg.unpaired_batch_size);
          auto lip_batch = lip_stream.Next(cfg.unpaired_batch_size);
          DualResult du = DualStep(reader, *generator, data, text_batch, lip_batch,
                                   cfg.alpha, cfg.max_generate_frames,
                                   cfg.duration_refinement,
                                   DeriveSeed(step_seed, "dual"));
          reader.params().AddGrads(du.reader_from_lr);
          reader.params().AddGrads(du.reader_from_lg);
          generator->params().AddGrads(du.generator_from_lr);
          generator->params().AddGrads(du.generator_from_lg);
          losses.L_u_lr = du.losses.L_u_lr;
          losses.L_u_lg = du.losses.L_u_lg;
          result.text_skipped += du.text_skipped;
          result.lip_skipped += du.lip_skipped;
        }
        ClipGradNorm(reader.params(), cfg.clip_norm);
        ClipGradNorm(generator->params(), cfg.clip_norm);
        reader_opt.Step(reader.params());
        generator_opt.Step(generator->params());
        sum += losses;
        ++steps;
      } catch (const NumericError &e) {
        throw TrainingAbort("training aborted at epoch " + std::to_string(epoch) +
                            ", step " + std::to_string(step) + ": " + e.what());
      }
    }

    EpochLog row;
    row.epoch = epoch;
    row.stage = stage;
    row.losses = sum.Scaled(1.0 / steps);
    row.total = row.losses.Total(cfg.alpha);
    EvalResult ev = Evaluate(reader, *generator, data, eval, cfg.max_generate_frames);
    row.eval = ev.report;
    row.eval_reader_loss = ev.reader_loss;
    if (!std::isfinite(row.total) || !std::isfinite(ev.reader_loss))
      throw TrainingAbort("training aborted at epoch " + std::to_string(epoch) +
                          ": non-finite loss");
    csv << MetricCsvRow(row) << '\n';
    csv.flush();
    result.epochs.push_back(row);

    if (ev.report.cer < best_cer) {
      best_cer = ev.report.cer;
      result.best_reader_epoch = epoch;
      SaveReader(run / "checkpoint", reader);
    }
    if (ev.report.mean_l1 < best_l1) {
      best_l1 = ev.report.mean_l1;
      result.best_generator_epoch = epoch;
      SaveGenerator(run / "checkpoint", *generator);
    }

    const bool reader_fire = reader_plateau.Update(ev.reader_loss);
    const bool generator_fire = generator_plateau.Update(ev.generator_loss);
    if (reader_fire) reader_opt.Decay();
    if (generator_fire) generator_opt.Decay();

    if (log) {
      char buf[320];
      std::snprintf(buf, sizeof(buf),
                    "epoch %3d stage %d  L_p_lr %.4f L_p_lg %.4f L_u_lr %.4f L_u_lg %.4f"
                    "  eval cer %.4f wer %.4f l1 %.4f psnr %.2f  ctc %.4f gen %.4f%s%s  %.1fs\n",
                    epoch, stage, row.losses.L_p_lr, row.losses.L_p_lg,
                    row.losses.L_u_lr, row.losses.L_u_lg, ev.report.cer, ev.report.wer,
                    ev.report.mean_l1, ev.report.mean_psnr, ev.reader_loss, ev.generator_loss,
                    reader_fire ? "  reader-decay" : "",
                    generator_fire ? "  generator-decay" : "",
                    std::chrono::duration<double>(Clock::now() - t0).count());
      *log << buf << std::flush;
    }

    if (stage == 1 && dual && !result.dual_disabled && epoch < cfg.total_epochs) {
      const bool switch_now =
          cfg.stage1_epochs > 0 ? epoch >= cfg.stage1_epochs : reader_fire;
      if (switch_now) {
        stage = 2;
        result.stage_switch_epoch = epoch + 1;
        if (log) *log << "switching to stage 2 at epoch " << epoch + 1 << '\n';
      }
    }
  }
  csv.close();

  SaveReader(run / "last", reader);
  SaveGenerator(run / "last", *generator);
  Checkpoint best = LoadCheckpoint(run / "checkpoint");
  EvalResult final_eval =
      Evaluate(*best.reader, *best.generator, data, eval, cfg.max_generate_frames);
  result.best = final_eval.report;
  std::ofstream ev(run / "eval.csv", std::ios::binary);
  ev << EvalReport::CsvHeader() << '\n' << final_eval.report.CsvRow() << '\n';
  return result;
}

}  // namespace duallab
