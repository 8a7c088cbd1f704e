// duallab/svg.h

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

#ifndef DUALLAB_SVG_H_
#define DUALLAB_SVG_H_

#include <string>
#include <vector>

#include "duallab/align.h"

namespace duallab {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line chart with one polyline and a marker per point for each series.
/// Each series gets its own y range, drawn as separate stacked panels.
std::string SvgLinePlot(const std::string &title, const std::string &x_label,
                        const std::vector<PlotSeries> &series);

/// T x K heat map, tokens on the vertical axis, frames on the horizontal
/// one.  One <rect class="cell"> per matrix entry.
std::string SvgHeatMap(const std::string &title, const AlignmentMatrix &alignment,
                       const std::vector<std::string> &token_labels);

}  // namespace duallab

#endif  // DUALLAB_SVG_H_
