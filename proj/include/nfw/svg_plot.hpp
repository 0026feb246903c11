#pragma once

#include <optional>
#include <string>
#include <vector>

namespace nfw {

struct PlotSeries {
  std::vector<double> x;
  std::vector<double> y;
  std::string label;
  std::string color = "#1f4e9c";
  bool markers = false;
};

struct GuideLine {
  double y = 0.0;
  std::string label;
  std::string color = "#2b7bd6";
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::vector<GuideLine> guides;
  std::optional<double> y_min;
  std::optional<double> y_max;
  int width = 720;
  int height = 420;
};

/// Self-contained SVG line plot. Non-finite points break the line.
[[nodiscard]] std::string render_svg(const PlotSpec& spec);

}  // namespace nfw
