#pragma once

// Minimal static SVG plots for benchmark output. Text is produced with fixed
// number formatting so identical data gives identical bytes.

#include <string>
#include <vector>

namespace resfit::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
};

// Polyline per series with markers and a legend. Non-finite points (and
// nonpositive ones on log axes) are skipped.
std::string line_plot(const Axes& axes, const std::vector<Series>& series);

// Cell colors for values[iy * x.size() + ix]; x and y are cell centers.
std::string heatmap(const Axes& axes, const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& values, const std::string& value_label);

}  // namespace resfit::svg
