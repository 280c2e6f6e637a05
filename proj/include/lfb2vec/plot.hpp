// lfb2vec/plot.hpp

// Copyright 2026  lfb2vec authors

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

// Dependency-free SVG line charts for loss curves and schedule inspection.

#ifndef LFB2VEC_PLOT_HPP_
#define LFB2VEC_PLOT_HPP_

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lfb2vec/common.hpp"

namespace lfb2vec {
namespace plot {

// One polyline over (xs, ys); deterministic text output.
inline std::string svg_line_chart(const std::vector<double>& xs,
                                  const std::vector<double>& ys,
                                  const std::string& title,
                                  const std::string& x_label,
                                  const std::string& y_label) {
  if (xs.size() != ys.size()) throw DataError("svg_line_chart: x/y length mismatch");
  if (xs.empty()) throw DataError("svg_line_chart: empty series");
  const double width = 640.0, height = 400.0, margin = 56.0;
  double x_lo = *std::min_element(xs.begin(), xs.end());
  double x_hi = *std::max_element(xs.begin(), xs.end());
  double y_lo = *std::min_element(ys.begin(), ys.end());
  double y_hi = *std::max_element(ys.begin(), ys.end());
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;
  auto px = [&](double x) {
    return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin);
  };
  auto py = [&](double y) {
    return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin);
  };
  char buf[128];
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  svg << "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg << "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n";
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                margin, height - margin, width - margin, height - margin);
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                margin, margin, margin, height - margin);
  svg << buf;
  svg << "<text x=\"320\" y=\"392\" text-anchor=\"middle\" font-size=\"12\">"
      << x_label << "</text>\n";
  svg << "<text x=\"14\" y=\"200\" text-anchor=\"middle\" font-size=\"12\" "
         "transform=\"rotate(-90 14 200)\">"
      << y_label << "</text>\n";
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\">%.6g</text>\n",
                margin, height - margin + 14.0, x_lo);
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"10\">%.6g</text>\n",
                width - margin, height - margin + 14.0, x_hi);
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"10\">%.6g</text>\n",
                margin - 4.0, height - margin, y_lo);
  svg << buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"10\">%.6g</text>\n",
                margin - 4.0, margin + 4.0, y_hi);
  svg << buf;
  svg << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", i ? " " : "", px(xs[i]), py(ys[i]));
    svg << buf;
  }
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

inline void write_svg(const std::string& svg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write SVG: " + path);
  out << svg;
}

// Pulls (step, loss) out of a metrics CSV written by the trainer.
inline void read_metrics_csv(const std::string& path, std::vector<double>* steps,
                             std::vector<double>* losses) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics CSV: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty metrics CSV: " + path);
  if (line.rfind("step,loss", 0) != 0)
    throw DataError("unexpected metrics CSV header in " + path + ": " + line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() < 2)
      throw DataError(path + ":" + std::to_string(line_no) + ": short CSV row");
    steps->push_back(std::stod(fields[0]));
    losses->push_back(std::stod(fields[1]));
  }
}

}  // namespace plot
}  // namespace lfb2vec

#endif  // LFB2VEC_PLOT_HPP_
