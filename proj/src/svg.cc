// duallab/svg.cc

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

#include "duallab/svg.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "duallab/tensor.h"

namespace duallab {

namespace {

std::string Escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string Label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

const char *kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

}  // namespace

std::string SvgLinePlot(const std::string &title, const std::string &x_label,
                        const std::vector<PlotSeries> &series) {
  if (series.empty()) throw Error("line plot: no series");
  const double width = 560, panel = 200, left = 70, right = 20, top = 40, gap = 50;
  const double height = top + series.size() * (panel + gap) + 10;
  double x_min = INFINITY, x_max = -INFINITY;
  for (const auto &s : series) {
    if (s.x.size() != s.y.size()) throw Error("line plot: x and y differ in length");
    for (double x : s.x) {
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (!(x_max > x_min)) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  const double plot_w = width - left - right;
  auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * plot_w; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Num(width)
     << "\" height=\"" << Num(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << Num(width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << Escape(title) << "</text>\n";
  for (size_t si = 0; si < series.size(); ++si) {
    const PlotSeries &s = series[si];
    const char *color = kColors[si % 5];
    const double y0 = top + si * (panel + gap);
    double lo = INFINITY, hi = -INFINITY;
    for (double y : s.y) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    if (s.y.empty()) lo = 0, hi = 1;
    if (!(hi > lo)) {
      double pad = std::max(std::abs(hi) * 0.1, 1e-3);
      lo -= pad;
      hi += pad;
    }
    auto py = [&](double y) { return y0 + panel - (y - lo) / (hi - lo) * panel; };
    os << "<g class=\"series\" data-name=\"" << Escape(s.name) << "\">\n"
       << "<rect x=\"" << Num(left) << "\" y=\"" << Num(y0) << "\" width=\"" << Num(plot_w)
       << "\" height=\"" << Num(panel) << "\" fill=\"none\" stroke=\"#888\"/>\n"
       << "<text x=\"" << Num(left) << "\" y=\"" << Num(y0 - 6) << "\" fill=\"" << color
       << "\">" << Escape(s.name) << "</text>\n";
    for (double t : {lo, hi})
      os << "<text x=\"" << Num(left - 6) << "\" y=\"" << Num(py(t) + 4)
         << "\" text-anchor=\"end\">" << Label(t) << "</text>\n";
    for (double x : s.x)
      os << "<text x=\"" << Num(px(x)) << "\" y=\"" << Num(y0 + panel + 16)
         << "\" text-anchor=\"middle\">" << Label(x) << "</text>\n";
    os << "<text x=\"" << Num(left + plot_w / 2) << "\" y=\"" << Num(y0 + panel + 32)
       << "\" text-anchor=\"middle\">" << Escape(x_label) << "</text>\n";
    if (!s.x.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i)
        os << (i ? " " : "") << Num(px(s.x[i])) << "," << Num(py(s.y[i]));
      os << "\"/>\n";
    }
    for (size_t i = 0; i < s.x.size(); ++i)
      os << "<circle class=\"point\" cx=\"" << Num(px(s.x[i])) << "\" cy=\"" << Num(py(s.y[i]))
         << "\" r=\"4\" fill=\"" << color << "\"><title>" << Label(s.x[i]) << ", "
         << Label(s.y[i]) << "</title></circle>\n";
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string SvgHeatMap(const std::string &title, const AlignmentMatrix &a,
                       const std::vector<std::string> &labels) {
  if (static_cast<int>(labels.size()) != a.tokens())
    throw Error("heat map: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(a.tokens()) + " tokens");
  const double cell = 8, left = 50, top = 36;
  const double width = left + a.frames() * cell + 20;
  const double height = top + a.tokens() * cell + 30;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Num(width)
     << "\" height=\"" << Num(height) << "\" font-family=\"sans-serif\" font-size=\"8\""
     << " data-tokens=\"" << a.tokens() << "\" data-frames=\"" << a.frames() << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << Num(left) << "\" y=\"18\" font-size=\"12\">" << Escape(title)
     << "</text>\n";
  for (int t = 0; t < a.tokens(); ++t) {
    os << "<text x=\"" << Num(left - 4) << "\" y=\"" << Num(top + t * cell + cell - 1)
       << "\" text-anchor=\"end\">" << Escape(labels[t]) << "</text>\n";
    for (int k = 0; k < a.frames(); ++k) {
      const double w = std::clamp(a.at(t, k), 0.0, 1.0);
      const int shade = static_cast<int>(std::lround(255 * (1.0 - w)));
      os << "<rect class=\"cell\" x=\"" << Num(left + k * cell) << "\" y=\""
         << Num(top + t * cell) << "\" width=\"" << Num(cell) << "\" height=\"" << Num(cell)
         << "\" fill=\"rgb(" << shade << "," << shade << ",255)\"/>\n";
    }
  }
  os << "<text x=\"" << Num(left) << "\" y=\"" << Num(height - 8) << "\">frames</text>\n"
     << "</svg>\n";
  return os.str();
}

}  // namespace duallab
