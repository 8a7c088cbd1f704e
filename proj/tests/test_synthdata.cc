// duallab/test_synthdata.cc

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

#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "duallab/align.h"
#include "duallab/synthdata.h"
#include "json.hpp"

using namespace duallab;
namespace fs = std::filesystem;

namespace {

CorpusConfig SmallConfig() {
  CorpusConfig c;
  c.utterances = 400;
  c.eval_per_speaker = 10;
  c.paired_fraction = 0.1;
  return c;
}

std::string ReadBytes(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("grammar size") {
  Grammar g = Grammar::Grid();
  REQUIRE(g.slots.size() == 6);
  std::vector<size_t> sizes;
  for (const auto &slot : g.slots) {
    sizes.push_back(slot.size());
    CHECK(std::set<std::string>(slot.begin(), slot.end()).size() == slot.size());
  }
  CHECK(sizes == std::vector<size_t>{4, 4, 4, 25, 10, 4});
  CHECK(g.NumSentences() == 64000);
}

TEST_CASE("sampled sentences") {
  Grammar g = Grammar::Grid();
  Vocabulary v = Vocabulary::Characters();
  Rng rng(1), again(1);
  for (int i = 0; i < 300; ++i) {
    std::vector<std::string> words;
    TextSeq t = SampleSentence(g, v, rng, &words);
    CHECK(SampleSentence(g, v, again) == t);
    REQUIRE(words.size() == 6);
    for (size_t s = 0; s < 6; ++s)
      CHECK(std::count(g.slots[s].begin(), g.slots[s].end(), words[s]) == 1);
    CHECK(t.front() == Vocabulary::kStartSilence);
    CHECK(t.back() == Vocabulary::kEndSilence);
    CHECK(std::count(t.begin(), t.end(), Vocabulary::kWordSeparator) == 5);
    std::string rendered = v.Render(StripSilence(t));
    std::string joined = words[0];
    for (size_t s = 1; s < 6; ++s) joined += " " + words[s];
    CHECK(rendered == joined);
  }
  Vocabulary ph = Vocabulary::Phonemes();
  TextSeq p = SampleSentence(g, ph, rng);
  CHECK(std::count(p.begin(), p.end(), Vocabulary::kWordSeparator) == 5);
}

TEST_CASE("sampled durations") {
  Grammar g = Grammar::Grid();
  Vocabulary v = Vocabulary::Characters();
  Rng rng(2);
  DurationRanges free_ranges;
  DurationRanges capped;
  capped.max_frames = 75;
  int capped_hits = 0;
  for (int i = 0; i < 500; ++i) {
    TextSeq t = SampleSentence(g, v, rng);
    Rng a(i), b(i);
    DurationSeq d = SampleDurations(t, a, free_ranges);
    CHECK(SampleDurations(t, b, free_ranges) == d);
    for (size_t j = 0; j < t.size(); ++j) {
      if (v.IsSilence(t[j])) {
        CHECK(d[j] >= 3);
        CHECK(d[j] <= 8);
      } else {
        CHECK(d[j] >= 2);
        CHECK(d[j] <= 5);
      }
    }
    Rng c(i);
    DurationSeq dc = SampleDurations(t, c, capped);
    int total = std::accumulate(dc.begin(), dc.end(), 0);
    CHECK(total <= 75);
    capped_hits += total == 75;
    for (size_t j = 0; j < t.size(); ++j) {
      CHECK(dc[j] >= 1);
      if (!v.IsSilence(t[j])) CHECK(dc[j] >= 2);
    }
  }
  CHECK(capped_hits > 0);
  CHECK_THROWS(SampleDurations(TextSeq{}, rng, free_ranges));
  DurationRanges tight;
  tight.max_frames = 3;
  CHECK_THROWS(SampleDurations(v.Parse("<#>abc<$>"), rng, tight));
}

TEST_CASE("viseme table") {
  Vocabulary v = Vocabulary::Characters();
  Rng rng(3);
  VisemeTable t = VisemeTable::Generate(v, 8, rng);
  CHECK(t.MinSeparation() >= VisemeTable::kMinSeparation);
  CHECK(t.vector(Vocabulary::kStartSilence) == t.vector(Vocabulary::kEndSilence));
  for (int id = 1; id < v.size(); ++id)
    for (double x : t.vector(id)) {
      CHECK(x >= 0.1);
      CHECK(x <= 0.9);
    }
  std::vector<double> zero(8, 0.0), shift(8, 0.03);
  for (int id = 1; id < v.size(); ++id) {
    int expect = v.IsSilence(id) ? Vocabulary::kStartSilence : id;
    CHECK(t.Nearest(t.vector(id), zero) == expect);
    std::vector<double> moved = t.vector(id);
    for (double &x : moved) x += 0.03;
    CHECK(t.Nearest(moved, shift) == expect);
  }
}

TEST_CASE("degenerate rendering is exact") {
  Vocabulary v = Vocabulary::Characters();
  Rng rng(4);
  VisemeTable t = VisemeTable::Generate(v, 8, rng);
  TextSeq text = v.Parse("<#>bin blue<$>");
  DurationSeq d = {3, 2, 4, 2, 1, 3, 2, 5, 2, 6};
  std::vector<double> offset = {0.01, -0.02, 0.03, 0.0, 0.05, -0.05, 0.02, 0.0};
  Trace tr = RenderTrace(text, d, offset, t, 0.0, 0, rng);
  TextSeq frames = Expand(text, d);
  REQUIRE(tr.frames == 30);
  for (int k = 0; k < tr.frames; ++k)
    for (int c = 0; c < 8; ++c)
      CHECK(tr.at(k, c) == static_cast<float>(t.vector(frames[k])[c] + offset[c]));

  // Coarticulation: interior frames still sit on the viseme; boundaries blend.
  Trace co = RenderTrace(text, d, offset, t, 0.0, 1, rng);
  CHECK(co.at(1, 0) == tr.at(1, 0));
  CHECK(co.at(2, 0) != tr.at(2, 0));
  CHECK(co.at(2, 0) == static_cast<float>(
                           (2 * t.vector(frames[1])[0] + t.vector(frames[3])[0]) / 3 +
                           offset[0]));

  CHECK_THROWS(RenderTrace(text, d, std::vector<double>(3, 0.0), t, 0.0, 0, rng));
  CHECK_THROWS(RenderTrace(text, DurationSeq{1, 2}, offset, t, 0.0, 0, rng));
}

TEST_CASE("rendering stays in range and is seeded") {
  Vocabulary v = Vocabulary::Characters();
  Rng rng(5);
  VisemeTable t = VisemeTable::Generate(v, 8, rng);
  TextSeq text = v.Parse("<#>set red<$>");
  DurationSeq d(text.size(), 3);
  std::vector<double> offset(8, 0.05);
  Rng a(9), b(9);
  Trace x = RenderTrace(text, d, offset, t, 0.5, 1, a);
  Trace y = RenderTrace(text, d, offset, t, 0.5, 1, b);
  CHECK(x.values == y.values);
  CHECK(x.frames == 3 * static_cast<int>(text.size()));
  CHECK_NOTHROW(x.Validate());
}

TEST_CASE("frames are identifiable away from token boundaries") {
  CorpusConfig c;
  Vocabulary v = Vocabulary::ForMode(c.mode);
  VisemeTable table = CorpusVisemeTable(c, v);
  auto offsets = SpeakerOffsets(c);
  long correct = 0, total = 0;
  for (int i = 0; i < 300; ++i) {
    GeneratedUtterance u = GenerateUtterance(c, v, table, offsets, i);
    TextSeq frames = Expand(u.text, u.durations);
    for (int k = c.coarticulation; k + c.coarticulation < u.trace.frames; ++k) {
      bool interior = true;
      for (int j = k - c.coarticulation; j <= k + c.coarticulation; ++j)
        interior &= frames[j] == frames[k];
      if (!interior) continue;
      std::vector<double> f(c.channels);
      for (int ch = 0; ch < c.channels; ++ch) f[ch] = u.trace.at(k, ch);
      int expect = v.IsSilence(frames[k]) ? Vocabulary::kStartSilence : frames[k];
      correct += table.Nearest(f, offsets[u.speaker]) == expect;
      ++total;
    }
  }
  REQUIRE(total > 5000);
  CHECK(static_cast<double>(correct) / total >= 0.99);
}

TEST_CASE("speaker offsets") {
  CorpusConfig c;
  auto offsets = SpeakerOffsets(c);
  REQUIRE(offsets.size() == 4);
  for (const auto &o : offsets) {
    CHECK(o.size() == 8);
    for (double x : o) CHECK(std::abs(x) <= 0.05);
  }
  CHECK(offsets[0] != offsets[1]);
  CHECK(SpeakerOffsets(c) == offsets);
}

TEST_CASE("splits") {
  CorpusConfig c = SmallConfig();
  CorpusManifest m = BuildCorpus(c);
  SplitSummary s = Summarize(m);
  CHECK(s.eval == 40);
  CHECK(s.paired + s.text_only + s.lip_only + s.eval == 400);
  CHECK(std::abs(s.paired - 36) <= 1);
  CHECK(std::abs(s.text_only - s.lip_only) <= 2);

  std::map<int, int> eval_per_speaker;
  std::set<std::string> text_sentences, lip_sentences;
  std::vector<GeneratedUtterance> utts;
  BuildCorpus(c, &utts);
  Vocabulary v = Vocabulary::Characters();
  for (size_t i = 0; i < m.entries.size(); ++i) {
    const ManifestEntry &e = m.entries[i];
    if (e.split == Split::kEval) ++eval_per_speaker[e.speaker];
    if (e.split == Split::kTextOnly) {
      CHECK(e.text);
      CHECK_FALSE(e.trace);
      text_sentences.insert(*e.text);
    }
    if (e.split == Split::kLipOnly) {
      CHECK_FALSE(e.text);
      CHECK_FALSE(e.durations);
      CHECK(e.trace);
      lip_sentences.insert(v.Render(utts[i].text));
    }
  }
  for (const auto &[speaker, n] : eval_per_speaker) CHECK(n == 10);
  for (const auto &sentence : lip_sentences) CHECK(text_sentences.count(sentence) == 0);

  c.paired_fraction = 1.0;
  SplitSummary full = Summarize(BuildCorpus(c));
  CHECK(full.paired == 360);
  CHECK(full.text_only == 0);
  CHECK(full.lip_only == 0);
}

TEST_CASE("split ratios follow the paired fraction") {
  for (double f : {0.05, 0.1, 0.3, 0.5, 0.9}) {
    CorpusConfig c = SmallConfig();
    c.paired_fraction = f;
    SplitSummary s = Summarize(BuildCorpus(c));
    const int pool = 360;
    CHECK(std::abs(s.paired - f * pool) <= 1.0);
    CHECK(std::abs((s.text_only + s.lip_only) - (1 - f) * pool) <= 1.0);
  }
}

TEST_CASE("invalid corpus configs") {
  for (auto mutate : std::vector<std::function<void(CorpusConfig &)>>{
           [](CorpusConfig &c) { c.paired_fraction = 0.0; },
           [](CorpusConfig &c) { c.paired_fraction = 1.5; },
           [](CorpusConfig &c) { c.speakers = 0; },
           [](CorpusConfig &c) { c.min_duration = 0; },
           [](CorpusConfig &c) { c.eval_per_speaker = 100; },
       }) {
    CorpusConfig c = SmallConfig();
    mutate(c);
    CHECK_THROWS(c.Validate());
  }
}

TEST_CASE("corpus on disk: manifest fields and bit-identical regeneration") {
  fs::path root = fs::temp_directory_path() / "duallab_test_corpus";
  fs::remove_all(root);
  CorpusConfig c = SmallConfig();
  c.utterances = 120;
  c.eval_per_speaker = 5;
  CorpusManifest m = MakeCorpus(c, root / "a");
  MakeCorpus(c, root / "b");
  CHECK(ReadBytes(root / "a" / "manifest.jsonl") == ReadBytes(root / "b" / "manifest.jsonl"));
  CHECK(ReadBytes(root / "a" / "corpus.json") == ReadBytes(root / "b" / "corpus.json"));
  int traces = 0;
  for (const auto &e : m.entries) {
    if (!e.trace) continue;
    ++traces;
    REQUIRE(ReadBytes(root / "a" / *e.trace) == ReadBytes(root / "b" / *e.trace));
  }
  CHECK(traces == 120 - Summarize(m).text_only);

  std::ifstream in(root / "a" / "manifest.jsonl");
  std::string line;
  std::getline(in, line);
  nlohmann::json j = nlohmann::json::parse(line);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  CHECK(keys == std::set<std::string>{"id", "speaker", "text", "durations", "trace", "split"});

  CorpusManifest back = CorpusManifest::Read(root / "a" / "manifest.jsonl");
  REQUIRE(back.entries.size() == m.entries.size());
  for (size_t i = 0; i < m.entries.size(); ++i) {
    CHECK(back.entries[i].id == m.entries[i].id);
    CHECK(back.entries[i].split == m.entries[i].split);
    CHECK(back.entries[i].durations == m.entries[i].durations);
  }
  CorpusConfig info = ReadCorpusInfo(root / "a" / "corpus.json");
  CHECK(info.seed == c.seed);
  CHECK(info.utterances == c.utterances);
  CHECK(info.paired_fraction == c.paired_fraction);

  c.seed = 2;
  MakeCorpus(c, root / "c");
  CHECK(ReadBytes(root / "a" / "manifest.jsonl") != ReadBytes(root / "c" / "manifest.jsonl"));
  fs::remove_all(root);
}

TEST_CASE("corpus config from key-value text") {
  KeyValueFile kv = KeyValueFile::Parse(
      "# corpus\nseed = 7\nutterances = 300\nmode = phoneme\nnoise_sigma = 0.01\n", "test");
  CorpusConfig c = CorpusConfigFromKeyValues(kv);
  CHECK(c.seed == 7);
  CHECK(c.utterances == 300);
  CHECK(c.mode == TokenMode::kPhoneme);
  CHECK(c.noise_sigma == 0.01);
  CHECK(c.channels == 8);
  CHECK_THROWS_AS(CorpusConfigFromKeyValues(KeyValueFile::Parse("seeds = 7\n", "test")),
                  ConfigError);
  CHECK_THROWS(CorpusConfigFromKeyValues(KeyValueFile::Parse("mode = bytes\n", "test")));
  CHECK_THROWS(CorpusConfigFromKeyValues(KeyValueFile::Parse("utterances = many\n", "test")));
}
