#include "rfl/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace rfl {

namespace {

constexpr double kWidth = 720.0;
constexpr double kPanelHeight = 180.0;
constexpr double kLeft = 80.0, kRight = 20.0, kTop = 40.0, kGap = 30.0, kBottom = 40.0;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string svg_figure(const std::string& title, const std::vector<double>& t, const std::vector<PlotPanel>& panels) {
  const double height = kTop + static_cast<double>(panels.size()) * (kPanelHeight + kGap) + kBottom;
  const double plot_w = kWidth - kLeft - kRight;
  const double t0 = t.empty() ? 0.0 : t.front();
  const double t1 = t.empty() || t.back() == t0 ? t0 + 1.0 : t.back();
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(kWidth) << "\" height=\"" << px(height)
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << px(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double top = kTop + static_cast<double>(p) * (kPanelHeight + kGap);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& s : panels[p].series) {
      for (double v : s.values) {
        if (std::isfinite(v)) {
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12 * (1.0 + std::abs(hi))) {
      const double pad = 0.5 * (1e-6 + std::abs(hi) * 1e-3);
      lo -= pad;
      hi += pad;
    }
    const double margin = 0.05 * (hi - lo);
    lo -= margin;
    hi += margin;
    auto X = [&](double tv) { return kLeft + plot_w * (tv - t0) / (t1 - t0); };
    auto Y = [&](double v) { return top + kPanelHeight * (hi - v) / (hi - lo); };

    os << "<rect x=\"" << px(kLeft) << "\" y=\"" << px(top) << "\" width=\"" << px(plot_w) << "\" height=\""
       << px(kPanelHeight) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double v = lo + (hi - lo) * k / 4.0;
      os << "<text x=\"" << px(kLeft - 4) << "\" y=\"" << px(Y(v) + 4) << "\" text-anchor=\"end\">" << num(v)
         << "</text>\n";
      const double tv = t0 + (t1 - t0) * k / 4.0;
      os << "<text x=\"" << px(X(tv)) << "\" y=\"" << px(top + kPanelHeight + 14) << "\" text-anchor=\"middle\">"
         << num(tv) << "</text>\n";
    }
    os << "<text transform=\"translate(14," << px(top + kPanelHeight / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
       << escape(panels[p].ylabel) << "</text>\n";
    for (std::size_t s = 0; s < panels[p].series.size(); ++s) {
      const auto& ser = panels[p].series[s];
      const char* color = kColors[s % (sizeof kColors / sizeof kColors[0])];
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\""
         << (ser.dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
      // Thin long trajectories to about two points per horizontal pixel.
      const std::size_t count = std::min(ser.values.size(), t.size());
      const std::size_t stride = std::max<std::size_t>(1, count / static_cast<std::size_t>(2 * plot_w));
      for (std::size_t i = 0; i < count; i += stride) {
        if (std::isfinite(ser.values[i])) os << px(X(t[i])) << "," << px(Y(ser.values[i])) << " ";
      }
      if (count > 0 && (count - 1) % stride != 0 && std::isfinite(ser.values[count - 1])) {
        os << px(X(t[count - 1])) << "," << px(Y(ser.values[count - 1]));
      }
      os << "\"/>\n";
      os << "<text x=\"" << px(kLeft + plot_w - 4) << "\" y=\"" << px(top + 14 + 13.0 * static_cast<double>(s))
         << "\" text-anchor=\"end\" fill=\"" << color << "\">" << escape(ser.label) << "</text>\n";
    }
  }
  os << "<text x=\"" << px(kLeft + plot_w / 2) << "\" y=\"" << px(height - 8) << "\" text-anchor=\"middle\">t [s]</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace rfl
