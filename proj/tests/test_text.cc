// duallab/test_text.cc

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
#include <set>

#include "doctest.h"
#include "duallab/text.h"
#include "duallab/trace.h"

using namespace duallab;
namespace fs = std::filesystem;

namespace {

fs::path ScratchDir(const std::string &name) {
  fs::path dir = fs::temp_directory_path() / ("duallab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("vocabulary layout") {
  for (TokenMode mode : {TokenMode::kCharacter, TokenMode::kPhoneme}) {
    Vocabulary v = Vocabulary::ForMode(mode);
    CHECK(v.mode() == mode);
    CHECK(v.token(Vocabulary::kBlank) == "<blank>");
    CHECK(v.token(Vocabulary::kStartSilence) == "<#>");
    CHECK(v.token(Vocabulary::kEndSilence) == "<$>");
    CHECK(v.IsSilence(1));
    CHECK(v.IsSilence(2));
    CHECK_FALSE(v.IsSilence(3));
    std::set<std::string> unique;
    for (int i = 0; i < v.size(); ++i) unique.insert(v.token(i));
    CHECK(unique.size() == static_cast<size_t>(v.size()));
  }
  CHECK(Vocabulary::Characters().size() == 30);
  CHECK(Vocabulary::Characters().token(3) == " ");
  CHECK(Vocabulary::Phonemes().token(3) == "|");
  CHECK(ParseTokenMode("phoneme") == TokenMode::kPhoneme);
  for (TokenMode mode : {TokenMode::kCharacter, TokenMode::kPhoneme})
    CHECK(ParseTokenMode(TokenModeName(mode)) == mode);
  CHECK_THROWS(ParseTokenMode("bytes"));
}

TEST_CASE("character parse and render") {
  Vocabulary v = Vocabulary::Characters();
  TextSeq ids = v.Parse("<#>set white<$>");
  CHECK(ids.size() == 11);
  CHECK(ids.front() == Vocabulary::kStartSilence);
  CHECK(ids.back() == Vocabulary::kEndSilence);
  CHECK(ids[4] == Vocabulary::kWordSeparator);
  CHECK(v.Render(ids) == "<#>set white<$>");
  CHECK(v.Render(StripSilence(ids)) == "set white");
  CHECK_THROWS(v.Parse("Set"));
  CHECK_THROWS(v.Parse("<blank>"));
  CHECK(v.Parse("").empty());
}

TEST_CASE("phoneme lexicon covers the grid words") {
  const auto &lex = GridLexicon();
  CHECK(lex.size() == 51);
  Vocabulary v = Vocabulary::Phonemes();
  for (const auto &[word, pron] : lex) {
    CHECK_FALSE(pron.empty());
    TextSeq ids = v.Spell(word);
    CHECK(ids.size() == pron.size());
    for (int id : ids) CHECK(id > Vocabulary::kWordSeparator);
  }
  TextSeq p = v.Parse("<#> " + v.Render(v.Spell("bin")) + " | " +
                      v.Render(v.Spell("blue")) + " <$>");
  CHECK(v.Parse(v.Render(p)) == p);
  CHECK_THROWS(v.Spell("zebra"));
  CHECK(Vocabulary::Characters().Spell("bin").size() == 3);
}

TEST_CASE("strip silence") {
  CHECK(StripSilence(std::vector<int>{1, 5, 3, 6, 2, 1}) == std::vector<int>{5, 3, 6});
  CHECK(StripSilence(std::vector<int>{1, 2}).empty());
}

TEST_CASE("trace validation and conversion") {
  Trace t;
  t.frames = 2;
  t.channels = 3;
  t.values = {0.0f, 0.5f, 1.0f, 0.25f, 0.75f, 0.125f};
  CHECK_NOTHROW(t.Validate());
  CHECK(t.Frame(1).at(0, 1) == 0.75);
  Tensor full = t.ToTensor();
  CHECK(full.rows() == 2);
  CHECK(full.cols() == 3);
  Trace back = Trace::FromTensor(Tensor::Matrix(1, 3, {-0.2, 0.3, 1.7}), 4);
  CHECK(back.values == std::vector<float>{0.0f, 0.3f, 1.0f});
  CHECK(back.speaker == 4);

  Trace bad = t;
  bad.values[2] = 1.5f;
  CHECK_THROWS(bad.Validate());
  bad.values.pop_back();
  CHECK_THROWS(bad.Validate());
  Trace empty;
  CHECK_THROWS(empty.Validate());
}

TEST_CASE("trace file round trip") {
  fs::path dir = ScratchDir("trace");
  Trace t;
  t.frames = 4;
  t.channels = 2;
  for (int i = 0; i < 8; ++i) t.values.push_back(static_cast<float>(i) / 7.0f);
  WriteTraceFile(dir / "a.dltr", t);
  CHECK(fs::file_size(dir / "a.dltr") == 13 + 4 * 8);
  Trace r = ReadTraceFile(dir / "a.dltr");
  CHECK(r.frames == 4);
  CHECK(r.channels == 2);
  CHECK(r.values == t.values);

  std::ifstream in(dir / "a.dltr", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "DLTR");

  {
    std::ofstream out(dir / "bad.dltr", std::ios::binary);
    out << "NOPE12345678";
  }
  CHECK_THROWS(ReadTraceFile(dir / "bad.dltr"));
  fs::resize_file(dir / "a.dltr", 20);
  CHECK_THROWS(ReadTraceFile(dir / "a.dltr"));
  CHECK_THROWS(ReadTraceFile(dir / "missing.dltr"));
  fs::remove_all(dir);
}
