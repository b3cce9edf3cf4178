#pragma once

#include <optional>
#include <string>
#include <vector>

namespace ubsgd {

struct LineChart {
  std::string title;
  std::string x_label = "k";
  std::string y_label;
  std::vector<double> y;             // plotted against x = 1, 2, ...
  std::optional<double> rule;        // horizontal reference line
  std::string rule_label;
  bool log_y = true;                 // falls back to linear if any y <= 0
};

// Self-contained SVG document (no scripts, fonts or external references).
std::string render_svg(const LineChart& chart);

}  // namespace ubsgd
