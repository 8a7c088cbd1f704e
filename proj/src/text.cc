// duallab/text.cc

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

#include "duallab/text.h"

#include <set>
#include <sstream>

#include "duallab/tensor.h"

namespace duallab {

const char *TokenModeName(TokenMode mode) {
  return mode == TokenMode::kCharacter ? "char" : "phoneme";
}

TokenMode ParseTokenMode(std::string_view name) {
  if (name == "char") return TokenMode::kCharacter;
  if (name == "phoneme") return TokenMode::kPhoneme;
  throw Error("unknown token mode: " + std::string(name));
}

const std::map<std::string, std::vector<std::string>, std::less<>> &
GridLexicon() {
  static const std::map<std::string, std::vector<std::string>, std::less<>>
      lexicon = {
          // commands
          {"bin", {"b", "ih", "n"}},
          {"lay", {"l", "ey"}},
          {"place", {"p", "l", "ey", "s"}},
          {"set", {"s", "eh", "t"}},
          // colors
          {"blue", {"b", "l", "uw"}},
          {"green", {"g", "r", "iy", "n"}},
          {"red", {"r", "eh", "d"}},
          {"white", {"w", "ay", "t"}},
          // prepositions
          {"at", {"ae", "t"}},
          {"by", {"b", "ay"}},
          {"in", {"ih", "n"}},
          {"with", {"w", "ih", "th"}},
          // letters (no "w")
          {"a", {"ey"}},
          {"b", {"b", "iy"}},
          {"c", {"s", "iy"}},
          {"d", {"d", "iy"}},
          {"e", {"iy"}},
          {"f", {"eh", "f"}},
          {"g", {"jh", "iy"}},
          {"h", {"ey", "ch"}},
          {"i", {"ay"}},
          {"j", {"jh", "ey"}},
          {"k", {"k", "ey"}},
          {"l", {"eh", "l"}},
          {"m", {"eh", "m"}},
          {"n", {"eh", "n"}},
          {"o", {"ow"}},
          {"p", {"p", "iy"}},
          {"q", {"k", "y", "uw"}},
          {"r", {"aa", "r"}},
          {"s", {"eh", "s"}},
          {"t", {"t", "iy"}},
          {"u", {"y", "uw"}},
          {"v", {"v", "iy"}},
          {"x", {"eh", "k", "s"}},
          {"y", {"w", "ay"}},
          {"z", {"z", "iy"}},
          // digits
          {"zero", {"z", "ih", "r", "ow"}},
          {"one", {"w", "ah", "n"}},
          {"two", {"t", "uw"}},
          {"three", {"th", "r", "iy"}},
          {"four", {"f", "ao", "r"}},
          {"five", {"f", "ay", "v"}},
          {"six", {"s", "ih", "k", "s"}},
          {"seven", {"s", "eh", "v", "ah", "n"}},
          {"eight", {"ey", "t"}},
          {"nine", {"n", "ay", "n"}},
          // adverbs
          {"again", {"ah", "g", "eh", "n"}},
          {"now", {"n", "aw"}},
          {"please", {"p", "l", "iy", "z"}},
          {"soon", {"s", "uw", "n"}},
      };
  return lexicon;
}

Vocabulary::Vocabulary(TokenMode mode, std::vector<std::string> tokens)
    : mode_(mode), tokens_(std::move(tokens)) {
  for (int i = 0; i < size(); ++i) index_.emplace(tokens_[i], i);
}

Vocabulary Vocabulary::Characters() {
  std::vector<std::string> tokens = {"<blank>", "<#>", "<$>", " "};
  for (char c = 'a'; c <= 'z'; ++c) tokens.emplace_back(1, c);
  return Vocabulary(TokenMode::kCharacter, std::move(tokens));
}

Vocabulary Vocabulary::Phonemes() {
  std::set<std::string> phones;
  for (const auto &[word, pron] : GridLexicon())
    phones.insert(pron.begin(), pron.end());
  std::vector<std::string> tokens = {"<blank>", "<#>", "<$>", "|"};
  tokens.insert(tokens.end(), phones.begin(), phones.end());
  return Vocabulary(TokenMode::kPhoneme, std::move(tokens));
}

Vocabulary Vocabulary::ForMode(TokenMode mode) {
  return mode == TokenMode::kCharacter ? Characters() : Phonemes();
}

int Vocabulary::Find(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? -1 : it->second;
}

TextSeq Vocabulary::Parse(std::string_view text) const {
  TextSeq out;
  auto push = [&](std::string_view tok) {
    int id = Find(tok);
    if (id < 0 || id == kBlank)
      throw Error("unknown token '" + std::string(tok) + "'");
    out.push_back(id);
  };
  if (mode_ == TokenMode::kCharacter) {
    size_t i = 0;
    while (i < text.size()) {
      if (text.compare(i, 3, "<#>") == 0 || text.compare(i, 3, "<$>") == 0) {
        push(text.substr(i, 3));
        i += 3;
      } else {
        push(text.substr(i, 1));
        ++i;
      }
    }
  } else {
    std::istringstream is{std::string(text)};
    std::string tok;
    while (is >> tok) push(tok);
  }
  return out;
}

std::string Vocabulary::Render(std::span<const int> ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (mode_ == TokenMode::kPhoneme && i > 0) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

std::string Vocabulary::DisplayToken(int id) const {
  if (mode_ == TokenMode::kCharacter && id == kWordSeparator) return "<sp>";
  return token(id);
}

TextSeq Vocabulary::Spell(std::string_view word) const {
  if (mode_ == TokenMode::kCharacter) return Parse(word);
  auto it = GridLexicon().find(word);
  if (it == GridLexicon().end())
    throw Error("no pronunciation for '" + std::string(word) + "'");
  TextSeq out;
  for (const auto &p : it->second) out.push_back(Find(p));
  return out;
}

TextSeq StripSilence(std::span<const int> ids) {
  TextSeq out;
  for (int id : ids)
    if (id != Vocabulary::kStartSilence && id != Vocabulary::kEndSilence)
      out.push_back(id);
  return out;
}

}  // namespace duallab
