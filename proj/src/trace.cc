// duallab/trace.cc

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

#include "duallab/trace.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace duallab {

namespace {

constexpr char kMagic[4] = {'D', 'L', 'T', 'R'};
constexpr unsigned char kVersion = 1;

void PutU32(std::vector<unsigned char> &out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

uint32_t GetU32(const unsigned char *p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

Tensor Trace::Frame(int k) const {
  std::vector<double> row(channels);
  for (int c = 0; c < channels; ++c) row[c] = at(k, c);
  return Tensor::Row(std::move(row));
}

Tensor Trace::ToTensor() const {
  Validate();
  return Tensor::Matrix(frames, channels,
                        std::vector<double>(values.begin(), values.end()));
}

Trace Trace::FromTensor(const Tensor &t, int speaker) {
  Trace trace;
  trace.frames = t.rows();
  trace.channels = t.cols();
  trace.speaker = speaker;
  trace.values.resize(t.size());
  auto d = t.data();
  for (size_t i = 0; i < d.size(); ++i)
    trace.values[i] = static_cast<float>(std::clamp(d[i], 0.0, 1.0));
  return trace;
}

void Trace::Validate() const {
  if (frames < 1 || channels < 1)
    throw ShapeError("trace: needs at least one frame and one channel");
  if (values.size() != static_cast<size_t>(frames) * channels)
    throw ShapeError("trace: value count does not match " +
                     std::to_string(frames) + " x " + std::to_string(channels));
  for (float v : values)
    if (!(v >= 0.0f && v <= 1.0f)) throw NumericError("trace: value outside [0,1]");
}

void WriteTraceFile(const std::filesystem::path &path, const Trace &trace) {
  trace.Validate();
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  out.push_back(kVersion);
  PutU32(out, static_cast<uint32_t>(trace.frames));
  PutU32(out, static_cast<uint32_t>(trace.channels));
  for (float v : trace.values) PutU32(out, std::bit_cast<uint32_t>(v));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write trace " + path.string());
  os.write(reinterpret_cast<const char *>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!os) throw Error("failed writing trace " + path.string());
}

Trace ReadTraceFile(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read trace " + path.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 13 || std::memcmp(raw.data(), kMagic, 4) != 0)
    throw Error(path.string() + ": not a trace file");
  if (raw[4] != kVersion)
    throw Error(path.string() + ": unsupported trace version " + std::to_string(raw[4]));
  Trace trace;
  trace.frames = static_cast<int>(GetU32(&raw[5]));
  trace.channels = static_cast<int>(GetU32(&raw[9]));
  size_t n = static_cast<size_t>(trace.frames) * trace.channels;
  if (raw.size() != 13 + 4 * n) throw Error(path.string() + ": truncated trace");
  trace.values.resize(n);
  for (size_t i = 0; i < n; ++i)
    trace.values[i] = std::bit_cast<float>(GetU32(&raw[13 + 4 * i]));
  trace.Validate();
  return trace;
}

}  // namespace duallab
