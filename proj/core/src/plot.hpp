#ifndef BITTA_SRC_PLOT_HPP
#define BITTA_SRC_PLOT_HPP

// Minimal deterministic SVG line plots. Private to the library.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace bitta::detail {

struct PlotSeries {
  std::string label;
  std::vector<double> ys;  // x is the sample index
};

void write_line_plot_svg(const std::filesystem::path& path,
                         const std::string& title, const std::string& x_label,
                         const std::string& y_label,
                         std::span<const PlotSeries> series);

/// Shortest-roundtrip decimal text for a double (locale independent).
std::string format_double(double v);

}  // namespace bitta::detail

#endif  // BITTA_SRC_PLOT_HPP
