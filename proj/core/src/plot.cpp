#include "plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "bitta/errors.hpp"

namespace bitta::detail {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

// Fixed-precision variant for SVG coordinates; keeps files compact.
std::string coord(double v) {
  char buf[32];
  const auto res =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 2);
  return std::string(buf, res.ptr);
}

const char* series_color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#ff7f0e", "#9467bd", "#8c564b"};
  return kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

}  // namespace

void write_line_plot_svg(const std::filesystem::path& path,
                         const std::string& title, const std::string& x_label,
                         const std::string& y_label,
                         std::span<const PlotSeries> series) {
  constexpr double kWidth = 880.0, kHeight = 520.0;
  constexpr double kLeft = 70.0, kRight = 170.0, kTop = 50.0, kBottom = 60.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::size_t max_n = 0;
  double y_min = 0.0, y_max = 1.0;
  bool seen = false;
  for (const auto& s : series) {
    max_n = std::max(max_n, s.ys.size());
    for (double y : s.ys) {
      if (!std::isfinite(y)) continue;
      if (!seen) {
        y_min = y_max = y;
        seen = true;
      } else {
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
      }
    }
  }
  if (max_n < 2) max_n = 2;
  if (!seen) {
    y_min = 0.0;
    y_max = 1.0;
  }
  if (y_max == y_min) y_max = y_min + 1.0;
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  auto x_of = [&](std::size_t i) {
    return kLeft + plot_w * static_cast<double>(i) /
                       static_cast<double>(max_n - 1);
  };
  auto y_of = [&](double y) {
    return kTop + plot_h * (1.0 - (y - y_min) / (y_max - y_min));
  };

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << coord(kLeft) << "\" y=\"28\" font-family=\"sans-serif\""
      << " font-size=\"16\">" << title << "</text>\n";

  // Axes.
  out << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(kTop)
      << "\" x2=\"" << coord(kLeft) << "\" y2=\"" << coord(kTop + plot_h)
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << coord(kLeft) << "\" y1=\"" << coord(kTop + plot_h)
      << "\" x2=\"" << coord(kLeft + plot_w) << "\" y2=\""
      << coord(kTop + plot_h) << "\" stroke=\"black\"/>\n";

  // Tick labels: y min/max, x 0/max.
  out << "<text x=\"8\" y=\"" << coord(kTop + 5)
      << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << format_double(y_max) << "</text>\n";
  out << "<text x=\"8\" y=\"" << coord(kTop + plot_h)
      << "\" font-family=\"sans-serif\" font-size=\"11\">"
      << format_double(y_min) << "</text>\n";
  out << "<text x=\"" << coord(kLeft) << "\" y=\""
      << coord(kHeight - 30) << "\" font-family=\"sans-serif\""
      << " font-size=\"11\">0</text>\n";
  out << "<text x=\"" << coord(kLeft + plot_w - 20) << "\" y=\""
      << coord(kHeight - 30) << "\" font-family=\"sans-serif\""
      << " font-size=\"11\">" << (max_n - 1) << "</text>\n";
  out << "<text x=\"" << coord(kLeft + plot_w / 2) << "\" y=\""
      << coord(kHeight - 12) << "\" font-family=\"sans-serif\""
      << " font-size=\"12\">" << x_label << "</text>\n";
  out << "<text x=\"14\" y=\"" << coord(kTop - 10)
      << "\" font-family=\"sans-serif\" font-size=\"12\">" << y_label
      << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.ys.empty()) continue;
    out << "<polyline fill=\"none\" stroke=\"" << series_color(si)
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.ys.size(); ++i) {
      if (!std::isfinite(s.ys[i])) continue;
      if (i) out << ' ';
      out << coord(x_of(i)) << ',' << coord(y_of(s.ys[i]));
    }
    out << "\"/>\n";
    // Legend entry.
    const double ly = kTop + 18.0 * static_cast<double>(si);
    out << "<line x1=\"" << coord(kLeft + plot_w + 12) << "\" y1=\""
        << coord(ly) << "\" x2=\"" << coord(kLeft + plot_w + 36) << "\" y2=\""
        << coord(ly) << "\" stroke=\"" << series_color(si)
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << coord(kLeft + plot_w + 42) << "\" y=\""
        << coord(ly + 4) << "\" font-family=\"sans-serif\""
        << " font-size=\"12\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace bitta::detail
