// duallab/trace.h

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

#ifndef DUALLAB_TRACE_H_
#define DUALLAB_TRACE_H_

#include <filesystem>
#include <vector>

#include "duallab/tensor.h"

namespace duallab {

/// K frames x D channels, values in [0,1], stored at single precision (the
/// on-disk precision) so that in-memory and reloaded traces are identical.
struct Trace {
  int frames = 0;
  int channels = 0;
  std::vector<float> values;
  int speaker = -1;

  float at(int k, int c) const {
    return values[static_cast<size_t>(k) * channels + c];
  }
  /// Frame k as a 1 x D row.
  Tensor Frame(int k) const;
  Tensor ToTensor() const;
  /// Clamps to [0,1] and rounds to float.
  static Trace FromTensor(const Tensor &t, int speaker = -1);

  void Validate() const;
};

/// "DLTR", version byte, K and D as little-endian uint32, K*D little-endian
/// float32.
void WriteTraceFile(const std::filesystem::path &path, const Trace &trace);
Trace ReadTraceFile(const std::filesystem::path &path);

}  // namespace duallab

#endif  // DUALLAB_TRACE_H_
