// duallab/text.h

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

#ifndef DUALLAB_TEXT_H_
#define DUALLAB_TEXT_H_

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace duallab {

/// Token ids.  A TextSeq never contains the blank.
using TextSeq = std::vector<int>;
/// Frames per token, parallel to a TextSeq.
using DurationSeq = std::vector<int>;

enum class TokenMode { kCharacter, kPhoneme };

const char *TokenModeName(TokenMode mode);
TokenMode ParseTokenMode(std::string_view name);

/// Token inventory.  Ids 0..3 are fixed in both modes: CTC blank, start
/// silence "<#>", end silence "<$>" and the word separator (" " for
/// characters, "|" for phonemes).
class Vocabulary {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kStartSilence = 1;
  static constexpr int kEndSilence = 2;
  static constexpr int kWordSeparator = 3;

  static Vocabulary Characters();
  static Vocabulary Phonemes();
  static Vocabulary ForMode(TokenMode mode);

  TokenMode mode() const { return mode_; }
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string &token(int id) const { return tokens_.at(id); }
  /// -1 when unknown.
  int Find(std::string_view token) const;
  bool IsSilence(int id) const {
    return id == kStartSilence || id == kEndSilence;
  }

  /// Character mode: "<#>set white<$>"; phoneme mode: whitespace separated
  /// tokens.  Throws on unknown tokens or the blank.
  TextSeq Parse(std::string_view text) const;
  std::string Render(std::span<const int> ids) const;
  /// Whitespace-free spelling used in token:count listings.
  std::string DisplayToken(int id) const;

  /// Pronunciation of a word in this vocabulary (the letters themselves in
  /// character mode).
  TextSeq Spell(std::string_view word) const;

 private:
  Vocabulary(TokenMode mode, std::vector<std::string> tokens);

  TokenMode mode_;
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
};

/// Phoneme pronunciations for the 51 GRID words.
const std::map<std::string, std::vector<std::string>, std::less<>> &
GridLexicon();

/// Drops silence tokens.
TextSeq StripSilence(std::span<const int> ids);

}  // namespace duallab

#endif  // DUALLAB_TEXT_H_
