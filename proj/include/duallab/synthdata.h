// duallab/synthdata.h

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

#ifndef DUALLAB_SYNTHDATA_H_
#define DUALLAB_SYNTHDATA_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "duallab/config.h"
#include "duallab/random.h"
#include "duallab/text.h"
#include "duallab/trace.h"

namespace duallab {

struct CorpusConfig {
  uint64_t seed = 1;
  int utterances = 2000;
  int speakers = 4;
  int channels = 8;
  double noise_sigma = 0.02;
  int coarticulation = 1;
  TokenMode mode = TokenMode::kCharacter;
  int min_duration = 2;
  int max_duration = 5;
  int min_silence = 3;
  int max_silence = 8;
  int max_frames = 75;  // 0 disables the cap
  double speaker_offset = 0.05;
  int eval_per_speaker = 50;
  double paired_fraction = 1.0;

  void Validate() const;
};

/// Canonical frame vector per token.  Both silence tokens share one neutral
/// vector; every other pair differs by at least `min_separation` in some
/// channel.
class VisemeTable {
 public:
  static constexpr double kMinSeparation = 0.05;

  static VisemeTable Generate(const Vocabulary &vocab, int channels, Rng &rng);

  int channels() const { return channels_; }
  const std::vector<double> &vector(int token) const { return table_.at(token); }
  /// Smallest L-infinity distance over distinct visual classes.
  double MinSeparation() const;
  /// Nearest token (L2) to `frame` after removing `offset`; silence maps to
  /// the start-silence id.
  int Nearest(std::span<const double> frame, std::span<const double> offset) const;

 private:
  int channels_ = 0;
  std::vector<std::vector<double>> table_;  // indexed by token id; blank empty
};

/// Ordered word slots.  Default is command+color+preposition+letter+digit+
/// adverb with 4,4,4,25,10,4 words.
struct Grammar {
  std::vector<std::vector<std::string>> slots;

  static Grammar Grid();
  uint64_t NumSentences() const;
};

/// Words joined by the word separator, wrapped in "<#>" ... "<$>".
TextSeq SampleSentence(const Grammar &grammar, const Vocabulary &vocab,
                       Rng &rng, std::vector<std::string> *words = nullptr);

struct DurationRanges {
  int min_duration = 2;
  int max_duration = 5;
  int min_silence = 3;
  int max_silence = 8;
  int max_frames = 0;  // 0 = no cap
};

/// Per-token frame counts.  Over the cap, silence shrinks first (down to one
/// frame), then the longest other tokens (down to min_duration).
DurationSeq SampleDurations(std::span<const int> text, Rng &rng,
                            const DurationRanges &ranges);

/// Expanded visemes, box-averaged over +-coarticulation frames, plus the
/// speaker offset and gaussian noise, clamped to [0,1].
Trace RenderTrace(std::span<const int> text, std::span<const int> durations,
                  std::span<const double> speaker_offset,
                  const VisemeTable &table, double noise_sigma,
                  int coarticulation, Rng &rng);

enum class Split { kPaired, kTextOnly, kLipOnly, kEval };
const char *SplitName(Split split);
Split ParseSplit(const std::string &name);

struct ManifestEntry {
  std::string id;
  int speaker = 0;
  std::optional<std::string> text;
  std::optional<DurationSeq> durations;
  std::optional<std::string> trace;  // path relative to the corpus root
  Split split = Split::kPaired;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;

  std::vector<const ManifestEntry *> Select(Split split) const;
  void Validate() const;
  /// JSON lines with fields id, speaker, text, durations, trace, split.
  void Write(const std::filesystem::path &path) const;
  static CorpusManifest Read(const std::filesystem::path &path);
};

/// Everything needed to regenerate or interpret a corpus.
struct CorpusInfo {
  CorpusConfig config;
  std::vector<std::vector<double>> speaker_offsets;
};

struct GeneratedUtterance {
  std::string id;
  int speaker = 0;
  TextSeq text;
  DurationSeq durations;
  Trace trace;
};

/// Deterministic per-speaker offsets.
std::vector<std::vector<double>> SpeakerOffsets(const CorpusConfig &config);
VisemeTable CorpusVisemeTable(const CorpusConfig &config, const Vocabulary &vocab);
std::string UtteranceId(int index);
GeneratedUtterance GenerateUtterance(const CorpusConfig &config,
                                     const Vocabulary &vocab,
                                     const VisemeTable &table,
                                     const std::vector<std::vector<double>> &offsets,
                                     int index);

/// Assigns split tags: eval held out per speaker, the rest split into paired
/// and unpaired, unpaired halved into text-only and lip-only with disjoint
/// sentences.
std::vector<Split> AssignSplits(const CorpusConfig &config,
                                const std::vector<int> &speakers,
                                const std::vector<std::string> &sentences);

struct SplitSummary {
  int paired = 0, text_only = 0, lip_only = 0, eval = 0;
};
SplitSummary Summarize(const CorpusManifest &manifest);

/// Generates every utterance and the manifest without touching the disk.
CorpusManifest BuildCorpus(const CorpusConfig &config,
                           std::vector<GeneratedUtterance> *utterances = nullptr);

/// Writes manifest.jsonl, corpus.json and traces/*.dltr under `out`.
CorpusManifest MakeCorpus(const CorpusConfig &config,
                          const std::filesystem::path &out);

/// Keys are the CorpusConfig field names; unknown keys are rejected.
CorpusConfig CorpusConfigFromKeyValues(const KeyValueFile &kv);

void WriteCorpusInfo(const std::filesystem::path &path, const CorpusConfig &config);
CorpusConfig ReadCorpusInfo(const std::filesystem::path &path);

}  // namespace duallab

#endif  // DUALLAB_SYNTHDATA_H_
