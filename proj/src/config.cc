// duallab/config.cc

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

#include "duallab/config.h"

#include <charconv>
#include <fstream>
#include <sstream>

namespace duallab {

namespace {

std::string Trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
bool ParseNumber(const std::string &s, T *out) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return false;
  *out = v;
  return true;
}

}  // namespace

KeyValueFile KeyValueFile::Parse(std::string_view text, const std::string &source) {
  KeyValueFile f;
  f.source_ = source;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view view(raw);
    size_t hash = view.find('#');
    if (hash != std::string_view::npos) view = view.substr(0, hash);
    std::string body = Trim(view);
    if (body.empty()) continue;
    size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line) +
                        ": expected key = value");
    std::string key = Trim(std::string_view(body).substr(0, eq));
    std::string value = Trim(std::string_view(body).substr(eq + 1));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(line) + ": empty key");
    if (f.entries_.count(key))
      throw ConfigError(source + ":" + std::to_string(line) +
                        ": duplicate key '" + key + "'");
    f.entries_[key] = Entry{value, line};
  }
  return f;
}

KeyValueFile KeyValueFile::Load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return Parse(ss.str(), path.string());
}

const KeyValueFile::Entry *KeyValueFile::Lookup(const std::string &key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

void KeyValueFile::Fail(const std::string &key, const Entry &e,
                        const std::string &what) const {
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": " + key +
                    ": expected " + what + ", got '" + e.value + "'");
}

void KeyValueFile::Get(const std::string &key, int *value) const {
  if (const Entry *e = Lookup(key))
    if (!ParseNumber(e->value, value)) Fail(key, *e, "an integer");
}

void KeyValueFile::Get(const std::string &key, uint64_t *value) const {
  if (const Entry *e = Lookup(key))
    if (!ParseNumber(e->value, value)) Fail(key, *e, "an unsigned integer");
}

void KeyValueFile::Get(const std::string &key, double *value) const {
  if (const Entry *e = Lookup(key))
    if (!ParseNumber(e->value, value)) Fail(key, *e, "a number");
}

void KeyValueFile::Get(const std::string &key, bool *value) const {
  if (const Entry *e = Lookup(key)) {
    if (e->value == "true" || e->value == "1") *value = true;
    else if (e->value == "false" || e->value == "0") *value = false;
    else Fail(key, *e, "true or false");
  }
}

void KeyValueFile::Get(const std::string &key, std::string *value) const {
  if (const Entry *e = Lookup(key)) *value = e->value;
}

void KeyValueFile::RejectUnknown() const {
  std::string unknown;
  for (const auto &[key, e] : entries_) {
    if (used_.count(key)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key + " (line " + std::to_string(e.line) + ")";
  }
  if (!unknown.empty())
    throw ConfigError(source_ + ": unknown keys: " + unknown);
}

}  // namespace duallab
