// duallab/synthdata.cc

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

#include "duallab/synthdata.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"

#include "duallab/align.h"

namespace duallab {

using nlohmann::json;

void CorpusConfig::Validate() const {
  auto fail = [](const std::string &what) { throw Error("corpus config: " + what); };
  if (utterances < 1) fail("utterances must be >= 1");
  if (speakers < 1) fail("speakers must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (noise_sigma < 0) fail("noise_sigma must be >= 0");
  if (coarticulation < 0) fail("coarticulation must be >= 0");
  if (min_duration < 1 || max_duration < min_duration) fail("bad duration range");
  if (min_silence < 1 || max_silence < min_silence) fail("bad silence range");
  if (max_frames < 0) fail("max_frames must be >= 0");
  if (eval_per_speaker < 0) fail("eval_per_speaker must be >= 0");
  if (!(paired_fraction > 0.0 && paired_fraction <= 1.0))
    fail("paired_fraction must be in (0, 1]");
  if (eval_per_speaker * speakers >= utterances)
    fail("eval split would leave no training utterances");
}

// ---------------------------------------------------------------------------
// VisemeTable

VisemeTable VisemeTable::Generate(const Vocabulary &vocab, int channels, Rng &rng) {
  VisemeTable t;
  t.channels_ = channels;
  std::vector<double> neutral(channels, 0.5);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    t.table_.assign(vocab.size(), {});
    for (int id = 1; id < vocab.size(); ++id) {
      if (vocab.IsSilence(id)) {
        t.table_[id] = neutral;
        continue;
      }
      std::vector<double> v(channels);
      for (double &x : v) x = Uniform(rng, 0.1, 0.9);
      t.table_[id] = std::move(v);
    }
    if (t.MinSeparation() >= kMinSeparation) return t;
  }
  throw Error("viseme table: could not reach the minimum separation");
}

double VisemeTable::MinSeparation() const {
  double best = std::numeric_limits<double>::infinity();
  for (size_t a = 1; a < table_.size(); ++a) {
    if (a == static_cast<size_t>(Vocabulary::kEndSilence)) continue;
    for (size_t b = a + 1; b < table_.size(); ++b) {
      if (b == static_cast<size_t>(Vocabulary::kEndSilence)) continue;
      double d = 0.0;
      for (int c = 0; c < channels_; ++c)
        d = std::max(d, std::abs(table_[a][c] - table_[b][c]));
      best = std::min(best, d);
    }
  }
  return best;
}

int VisemeTable::Nearest(std::span<const double> frame,
                         std::span<const double> offset) const {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t id = 1; id < table_.size(); ++id) {
    if (id == static_cast<size_t>(Vocabulary::kEndSilence)) continue;
    double d = 0.0;
    for (int c = 0; c < channels_; ++c) {
      double diff = frame[c] - offset[c] - table_[id][c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(id);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Grammar and sampling

Grammar Grammar::Grid() {
  Grammar g;
  g.slots.push_back({"bin", "lay", "place", "set"});
  g.slots.push_back({"blue", "green", "red", "white"});
  g.slots.push_back({"at", "by", "in", "with"});
  std::vector<std::string> letters;
  for (char c = 'a'; c <= 'z'; ++c)
    if (c != 'w') letters.emplace_back(1, c);
  g.slots.push_back(letters);
  g.slots.push_back({"zero", "one", "two", "three", "four", "five", "six",
                     "seven", "eight", "nine"});
  g.slots.push_back({"again", "now", "please", "soon"});
  return g;
}

uint64_t Grammar::NumSentences() const {
  uint64_t n = 1;
  for (const auto &slot : slots) n *= slot.size();
  return n;
}

TextSeq SampleSentence(const Grammar &grammar, const Vocabulary &vocab, Rng &rng,
                       std::vector<std::string> *words) {
  TextSeq text = {Vocabulary::kStartSilence};
  if (words) words->clear();
  for (size_t s = 0; s < grammar.slots.size(); ++s) {
    const auto &slot = grammar.slots[s];
    const std::string &word =
        slot[UniformInt(rng, 0, static_cast<int>(slot.size()) - 1)];
    if (words) words->push_back(word);
    if (s > 0) text.push_back(Vocabulary::kWordSeparator);
    TextSeq spelled = vocab.Spell(word);
    text.insert(text.end(), spelled.begin(), spelled.end());
  }
  text.push_back(Vocabulary::kEndSilence);
  return text;
}

DurationSeq SampleDurations(std::span<const int> text, Rng &rng,
                            const DurationRanges &ranges) {
  if (text.empty()) throw Error("sample_durations: empty text");
  DurationSeq d(text.size());
  std::vector<bool> silent(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    silent[i] = text[i] == Vocabulary::kStartSilence ||
                text[i] == Vocabulary::kEndSilence;
    d[i] = silent[i] ? UniformInt(rng, ranges.min_silence, ranges.max_silence)
                     : UniformInt(rng, ranges.min_duration, ranges.max_duration);
  }
  if (ranges.max_frames <= 0) return d;
  int total = std::accumulate(d.begin(), d.end(), 0);
  while (total > ranges.max_frames) {
    // Longest silence first, then the longest shrinkable token.
    int pick = -1;
    for (size_t i = 0; i < d.size(); ++i)
      if (silent[i] && d[i] > 1 && (pick < 0 || d[i] > d[pick])) pick = static_cast<int>(i);
    if (pick < 0)
      for (size_t i = 0; i < d.size(); ++i)
        if (!silent[i] && d[i] > ranges.min_duration && (pick < 0 || d[i] > d[pick]))
          pick = static_cast<int>(i);
    if (pick < 0)
      throw Error("sample_durations: " + std::to_string(text.size()) +
                  " tokens cannot fit in " + std::to_string(ranges.max_frames) +
                  " frames");
    --d[pick];
    --total;
  }
  return d;
}

Trace RenderTrace(std::span<const int> text, std::span<const int> durations,
                  std::span<const double> speaker_offset,
                  const VisemeTable &table, double noise_sigma,
                  int coarticulation, Rng &rng) {
  TextSeq frames = Expand(text, durations);
  const int k_frames = static_cast<int>(frames.size());
  const int channels = table.channels();
  if (static_cast<int>(speaker_offset.size()) != channels)
    throw ShapeError("render_trace: speaker offset has wrong dimension");
  Trace trace;
  trace.frames = k_frames;
  trace.channels = channels;
  trace.values.resize(static_cast<size_t>(k_frames) * channels);
  for (int k = 0; k < k_frames; ++k) {
    int lo = std::max(0, k - coarticulation);
    int hi = std::min(k_frames - 1, k + coarticulation);
    for (int c = 0; c < channels; ++c) {
      double v = 0.0;
      for (int j = lo; j <= hi; ++j) v += table.vector(frames[j])[c];
      v /= static_cast<double>(hi - lo + 1);
      v += speaker_offset[c];
      if (noise_sigma > 0) v += Gaussian(rng, noise_sigma);
      trace.values[static_cast<size_t>(k) * channels + c] =
          static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Splits and manifest

const char *SplitName(Split split) {
  switch (split) {
    case Split::kPaired: return "paired";
    case Split::kTextOnly: return "text_only";
    case Split::kLipOnly: return "lip_only";
    case Split::kEval: return "eval";
  }
  return "?";
}

Split ParseSplit(const std::string &name) {
  if (name == "paired") return Split::kPaired;
  if (name == "text_only") return Split::kTextOnly;
  if (name == "lip_only") return Split::kLipOnly;
  if (name == "eval") return Split::kEval;
  throw Error("unknown split tag '" + name + "'");
}

std::vector<const ManifestEntry *> CorpusManifest::Select(Split split) const {
  std::vector<const ManifestEntry *> out;
  for (const auto &e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

void CorpusManifest::Validate() const {
  std::map<std::string, int> ids;
  std::map<std::string, bool> text_only_sentences;
  for (const auto &e : entries) {
    if (ids[e.id]++) throw Error("manifest: duplicate id " + e.id);
    bool has_text = e.text.has_value(), has_trace = e.trace.has_value();
    if (e.split == Split::kTextOnly && (has_trace || !has_text))
      throw Error("manifest: text_only entry " + e.id + " must have text and no trace");
    if (e.split == Split::kLipOnly && (has_text || !has_trace))
      throw Error("manifest: lip_only entry " + e.id + " must have a trace and no text");
    if ((e.split == Split::kPaired || e.split == Split::kEval) && (!has_text || !has_trace))
      throw Error("manifest: entry " + e.id + " needs text and trace");
    if (has_text != e.durations.has_value())
      throw Error("manifest: entry " + e.id + " has text without durations or vice versa");
  }
}

void CorpusManifest::Write(const std::filesystem::path &path) const {
  std::ofstream os(path);
  if (!os) throw Error("cannot write manifest " + path.string());
  for (const auto &e : entries) {
    json j;
    j["id"] = e.id;
    j["speaker"] = e.speaker;
    j["text"] = e.text ? json(*e.text) : json(nullptr);
    j["durations"] = e.durations ? json(*e.durations) : json(nullptr);
    j["trace"] = e.trace ? json(*e.trace) : json(nullptr);
    j["split"] = SplitName(e.split);
    os << j.dump() << '\n';
  }
  if (!os) throw Error("failed writing manifest " + path.string());
}

CorpusManifest CorpusManifest::Read(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read manifest " + path.string());
  CorpusManifest m;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.speaker = j.at("speaker").get<int>();
      if (!j.at("text").is_null()) e.text = j["text"].get<std::string>();
      if (!j.at("durations").is_null()) e.durations = j["durations"].get<DurationSeq>();
      if (!j.at("trace").is_null()) e.trace = j["trace"].get<std::string>();
      e.split = ParseSplit(j.at("split").get<std::string>());
      m.entries.push_back(std::move(e));
    } catch (const json::exception &ex) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  m.Validate();
  return m;
}

// ---------------------------------------------------------------------------
// Corpus generation

std::vector<std::vector<double>> SpeakerOffsets(const CorpusConfig &config) {
  std::vector<std::vector<double>> offsets(config.speakers);
  for (int s = 0; s < config.speakers; ++s) {
    Rng rng(DeriveSeed(config.seed, "speaker" + std::to_string(s)));
    offsets[s].resize(config.channels);
    for (double &v : offsets[s])
      v = Uniform(rng, -config.speaker_offset, config.speaker_offset);
  }
  return offsets;
}

VisemeTable CorpusVisemeTable(const CorpusConfig &config, const Vocabulary &vocab) {
  Rng rng(DeriveSeed(config.seed, "visemes"));
  return VisemeTable::Generate(vocab, config.channels, rng);
}

std::string UtteranceId(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "utt%05d", index);
  return buf;
}

GeneratedUtterance GenerateUtterance(const CorpusConfig &config,
                                     const Vocabulary &vocab,
                                     const VisemeTable &table,
                                     const std::vector<std::vector<double>> &offsets,
                                     int index) {
  GeneratedUtterance u;
  u.id = UtteranceId(index);
  u.speaker = index % config.speakers;
  Rng rng(DeriveSeed(config.seed, u.id));
  static const Grammar grammar = Grammar::Grid();
  u.text = SampleSentence(grammar, vocab, rng);
  DurationRanges ranges{config.min_duration, config.max_duration,
                        config.min_silence, config.max_silence, config.max_frames};
  u.durations = SampleDurations(u.text, rng, ranges);
  u.trace = RenderTrace(u.text, u.durations, offsets[u.speaker], table,
                        config.noise_sigma, config.coarticulation, rng);
  u.trace.speaker = u.speaker;
  return u;
}

std::vector<Split> AssignSplits(const CorpusConfig &config,
                                const std::vector<int> &speakers,
                                const std::vector<std::string> &sentences) {
  const int n = static_cast<int>(speakers.size());
  std::vector<Split> split(n, Split::kPaired);
  std::vector<int> rest;
  for (int s = 0; s < config.speakers; ++s) {
    std::vector<int> mine;
    for (int i = 0; i < n; ++i)
      if (speakers[i] == s) mine.push_back(i);
    Rng rng(DeriveSeed(config.seed, "eval" + std::to_string(s)));
    std::shuffle(mine.begin(), mine.end(), rng);
    int n_eval = std::min<int>(config.eval_per_speaker, static_cast<int>(mine.size()));
    for (int j = 0; j < static_cast<int>(mine.size()); ++j) {
      if (j < n_eval)
        split[mine[j]] = Split::kEval;
      else
        rest.push_back(mine[j]);
    }
  }
  std::sort(rest.begin(), rest.end());
  Rng rng(DeriveSeed(config.seed, "paired"));
  std::shuffle(rest.begin(), rest.end(), rng);
  int n_paired = static_cast<int>(std::lround(config.paired_fraction * rest.size()));
  n_paired = std::clamp(n_paired, 1, static_cast<int>(rest.size()));
  std::vector<int> unpaired(rest.begin() + n_paired, rest.end());
  std::sort(unpaired.begin(), unpaired.end());

  // Sentence groups alternate between the two unpaired halves so that no
  // sentence lands on both sides.
  std::map<std::string, std::vector<int>> groups;
  std::vector<std::string> order;
  for (int i : unpaired) {
    auto &g = groups[sentences[i]];
    if (g.empty()) order.push_back(sentences[i]);
    g.push_back(i);
  }
  int text_count = 0, lip_count = 0;
  for (const auto &sentence : order) {
    const auto &g = groups[sentence];
    bool to_text = text_count <= lip_count;
    for (int i : g) split[i] = to_text ? Split::kTextOnly : Split::kLipOnly;
    (to_text ? text_count : lip_count) += static_cast<int>(g.size());
  }
  return split;
}

SplitSummary Summarize(const CorpusManifest &manifest) {
  SplitSummary s;
  for (const auto &e : manifest.entries) {
    switch (e.split) {
      case Split::kPaired: ++s.paired; break;
      case Split::kTextOnly: ++s.text_only; break;
      case Split::kLipOnly: ++s.lip_only; break;
      case Split::kEval: ++s.eval; break;
    }
  }
  return s;
}

CorpusManifest BuildCorpus(const CorpusConfig &config,
                           std::vector<GeneratedUtterance> *utterances) {
  config.Validate();
  Vocabulary vocab = Vocabulary::ForMode(config.mode);
  VisemeTable table = CorpusVisemeTable(config, vocab);
  auto offsets = SpeakerOffsets(config);

  std::vector<GeneratedUtterance> utts;
  utts.reserve(config.utterances);
  std::vector<int> speakers;
  std::vector<std::string> sentences;
  for (int i = 0; i < config.utterances; ++i) {
    utts.push_back(GenerateUtterance(config, vocab, table, offsets, i));
    speakers.push_back(utts.back().speaker);
    sentences.push_back(vocab.Render(utts.back().text));
  }
  std::vector<Split> splits = AssignSplits(config, speakers, sentences);

  CorpusManifest manifest;
  for (int i = 0; i < config.utterances; ++i) {
    const auto &u = utts[i];
    ManifestEntry e;
    e.id = u.id;
    e.speaker = u.speaker;
    e.split = splits[i];
    if (e.split != Split::kLipOnly) {
      e.text = sentences[i];
      e.durations = u.durations;
    }
    if (e.split != Split::kTextOnly) e.trace = "traces/" + u.id + ".dltr";
    manifest.entries.push_back(std::move(e));
  }
  manifest.Validate();
  if (utterances) *utterances = std::move(utts);
  return manifest;
}

CorpusManifest MakeCorpus(const CorpusConfig &config,
                          const std::filesystem::path &out) {
  std::vector<GeneratedUtterance> utts;
  CorpusManifest manifest = BuildCorpus(config, &utts);
  std::filesystem::create_directories(out / "traces");
  for (size_t i = 0; i < utts.size(); ++i) {
    const ManifestEntry &e = manifest.entries[i];
    if (e.trace) WriteTraceFile(out / *e.trace, utts[i].trace);
  }
  manifest.Write(out / "manifest.jsonl");
  WriteCorpusInfo(out / "corpus.json", config);
  return manifest;
}

CorpusConfig CorpusConfigFromKeyValues(const KeyValueFile &kv) {
  CorpusConfig c;
  kv.Get("seed", &c.seed);
  kv.Get("utterances", &c.utterances);
  kv.Get("speakers", &c.speakers);
  kv.Get("channels", &c.channels);
  kv.Get("noise_sigma", &c.noise_sigma);
  kv.Get("coarticulation", &c.coarticulation);
  std::string mode = TokenModeName(c.mode);
  kv.Get("mode", &mode);
  c.mode = ParseTokenMode(mode);
  kv.Get("min_duration", &c.min_duration);
  kv.Get("max_duration", &c.max_duration);
  kv.Get("min_silence", &c.min_silence);
  kv.Get("max_silence", &c.max_silence);
  kv.Get("max_frames", &c.max_frames);
  kv.Get("speaker_offset", &c.speaker_offset);
  kv.Get("eval_per_speaker", &c.eval_per_speaker);
  kv.Get("paired_fraction", &c.paired_fraction);
  kv.RejectUnknown();
  c.Validate();
  return c;
}

void WriteCorpusInfo(const std::filesystem::path &path, const CorpusConfig &c) {
  json j;
  j["seed"] = c.seed;
  j["utterances"] = c.utterances;
  j["speakers"] = c.speakers;
  j["channels"] = c.channels;
  j["noise_sigma"] = c.noise_sigma;
  j["coarticulation"] = c.coarticulation;
  j["mode"] = TokenModeName(c.mode);
  j["min_duration"] = c.min_duration;
  j["max_duration"] = c.max_duration;
  j["min_silence"] = c.min_silence;
  j["max_silence"] = c.max_silence;
  j["max_frames"] = c.max_frames;
  j["speaker_offset"] = c.speaker_offset;
  j["eval_per_speaker"] = c.eval_per_speaker;
  j["paired_fraction"] = c.paired_fraction;
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

CorpusConfig ReadCorpusInfo(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read corpus info " + path.string());
  json j = json::parse(is);
  CorpusConfig c;
  c.seed = j.at("seed").get<uint64_t>();
  c.utterances = j.at("utterances").get<int>();
  c.speakers = j.at("speakers").get<int>();
  c.channels = j.at("channels").get<int>();
  c.noise_sigma = j.at("noise_sigma").get<double>();
  c.coarticulation = j.at("coarticulation").get<int>();
  c.mode = ParseTokenMode(j.at("mode").get<std::string>());
  c.min_duration = j.at("min_duration").get<int>();
  c.max_duration = j.at("max_duration").get<int>();
  c.min_silence = j.at("min_silence").get<int>();
  c.max_silence = j.at("max_silence").get<int>();
  c.max_frames = j.at("max_frames").get<int>();
  c.speaker_offset = j.at("speaker_offset").get<double>();
  c.eval_per_speaker = j.at("eval_per_speaker").get<int>();
  c.paired_fraction = j.at("paired_fraction").get<double>();
  return c;
}

}  // namespace duallab
