#pragma once

#include <string>
#include <utility>
#include <vector>

namespace lanereg::harness {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartText {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string note;  // small print under the title, e.g. the config hash
};

/// Self-contained SVG documents; NaN points are skipped.
std::string line_chart(const ChartText& text, const std::vector<Series>& series);
/// One box (quartiles, whiskers at min/max, mean marker) per named group.
std::string box_plot(const ChartText& text, const std::vector<std::pair<std::string, std::vector<double>>>& groups);
/// Grouped bars: one group per category, one bar per series (values in series[i].y[category]).
std::string bar_chart(const ChartText& text, const std::vector<std::string>& categories, const std::vector<Series>& series);

}  // namespace lanereg::harness
