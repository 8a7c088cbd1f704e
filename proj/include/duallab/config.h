// duallab/config.h

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

#ifndef DUALLAB_CONFIG_H_
#define DUALLAB_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "duallab/tensor.h"

namespace duallab {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Line-based "key = value" file.  '#' starts a comment; blank lines are
/// ignored; duplicate keys are an error.  Typed getters mark keys as used so
/// that leftovers can be rejected.
class KeyValueFile {
 public:
  KeyValueFile() = default;
  static KeyValueFile Parse(std::string_view text,
                            const std::string &source = "<string>");
  static KeyValueFile Load(const std::filesystem::path &path);

  bool Has(const std::string &key) const { return entries_.count(key) > 0; }
  size_t size() const { return entries_.size(); }

  /// Each getter leaves `*value` untouched when the key is absent.
  void Get(const std::string &key, int *value) const;
  void Get(const std::string &key, uint64_t *value) const;
  void Get(const std::string &key, double *value) const;
  void Get(const std::string &key, bool *value) const;
  void Get(const std::string &key, std::string *value) const;

  /// Throws ConfigError naming every key no getter asked for.
  void RejectUnknown() const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry *Lookup(const std::string &key) const;
  [[noreturn]] void Fail(const std::string &key, const Entry &e,
                         const std::string &what) const;

  std::string source_;
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

}  // namespace duallab

#endif  // DUALLAB_CONFIG_H_
