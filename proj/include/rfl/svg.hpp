#pragma once

#include <string>
#include <vector>

namespace rfl {

struct PlotSeries {
  std::string label;
  std::vector<double> values;  // same length as the shared time axis
  bool dashed = false;
};

struct PlotPanel {
  std::string ylabel;
  std::vector<PlotSeries> series;
};

// Stacked line plots sharing one time axis, as a standalone SVG document.
std::string svg_figure(const std::string& title, const std::vector<double>& t, const std::vector<PlotPanel>& panels);

}  // namespace rfl
