#pragma once

#include <string>
#include <vector>

// Tiny static-SVG chart writer for the analyze reports: grouped bars for
// attention shares and line plots for density curves. Output is plain
// markup with fixed-precision coordinates, so identical inputs produce
// identical bytes.

namespace avemdpo::svgplot {

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one value per group
};

// One cluster of bars per group label. Throws std::invalid_argument when
// a series length does not match the group count or nothing is plotted.
std::string bar_chart_svg(const std::string& title,
                          const std::vector<std::string>& groups,
                          const std::vector<BarSeries>& series,
                          const std::string& y_label);

struct Curve {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Polyline chart with a shared frame; axes are scaled to the joint data
// range. Throws std::invalid_argument on mismatched or empty curves.
std::string line_chart_svg(const std::string& title,
                           const std::vector<Curve>& curves,
                           const std::string& x_label,
                           const std::string& y_label);

}  // namespace avemdpo::svgplot
