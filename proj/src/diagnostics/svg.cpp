#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "tpt/diagnostics.hpp"

namespace tpt::diag {
namespace {

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr std::array kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

std::vector<std::optional<std::size_t>> heatmap_marks(
    const std::vector<std::vector<double>>& drift, double threshold) {
  std::vector<std::optional<std::size_t>> marks;
  for (const auto& row : drift) {
    if (row.empty()) {
      marks.emplace_back();
      continue;
    }
    const auto it = std::max_element(row.begin(), row.end());
    if (*it > threshold) marks.emplace_back(static_cast<std::size_t>(it - row.begin()));
    else marks.emplace_back();
  }
  return marks;
}

std::string heatmap_csv(const std::vector<std::vector<double>>& drift) {
  std::ostringstream out;
  out << "layer,pair,drift_rad,drift_deg\n";
  for (std::size_t l = 0; l < drift.size(); ++l) {
    for (std::size_t k = 0; k < drift[l].size(); ++k) {
      out << l << ',' << k << ',' << fmt(drift[l][k], "%.9g") << ','
          << fmt(radians_to_degrees(drift[l][k]), "%.6g") << '\n';
    }
  }
  return out.str();
}

std::string heatmap_svg(const std::vector<std::vector<double>>& drift, const std::string& title) {
  constexpr int cell = 18, left = 70, top = 40;
  std::size_t cols = 0;
  double vmax = 0.0;
  for (const auto& row : drift) {
    cols = std::max(cols, row.size());
    for (double v : row) vmax = std::max(vmax, v);
  }
  const int width = left + static_cast<int>(cols) * cell + 20;
  const int height = top + static_cast<int>(drift.size()) * cell + 40;
  const auto marks = heatmap_marks(drift);

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << escape(title) << " (max "
    << fmt(radians_to_degrees(vmax), "%.3g") << " deg)</text>\n";
  for (std::size_t l = 0; l < drift.size(); ++l) {
    const int y = top + static_cast<int>(l) * cell;
    s << "<text x=\"8\" y=\"" << y + cell - 5 << "\">block " << l << "</text>\n";
    for (std::size_t k = 0; k < drift[l].size(); ++k) {
      const double t = vmax > 0 ? drift[l][k] / vmax : 0.0;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      const int x = left + static_cast<int>(k) * cell;
      s << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\""
        << " data-layer=\"" << l << "\" data-pair=\"" << k << "\"/>\n";
    }
    if (marks[l]) {
      const int x = left + static_cast<int>(*marks[l]) * cell;
      s << "<rect class=\"max\" x=\"" << x + 1 << "\" y=\"" << y + 1 << "\" width=\"" << cell - 2
        << "\" height=\"" << cell - 2 << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\""
        << " data-layer=\"" << l << "\" data-pair=\"" << *marks[l] << "\"/>\n";
    }
  }
  s << "<text x=\"" << left << "\" y=\"" << height - 12 << "\">pair index</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label) {
  constexpr double W = 640, H = 400, ml = 70, mr = 150, mt = 40, mb = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& sr : series) {
    for (std::size_t i = 0; i < std::min(sr.x.size(), sr.y.size()); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      x0 = std::min(x0, sr.x[i]);
      x1 = std::max(x1, sr.x[i]);
      y0 = std::min(y0, sr.y[i]);
      y1 = std::max(y1, sr.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = W - ml - mr, ph = H - mt - mb;
  const auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return mt + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << ml << "\" y=\"22\" font-size=\"13\">" << escape(title) << "</text>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
    << mt + ph << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    s << "<text x=\"" << px(fx) << "\" y=\"" << mt + ph + 15 << "\" text-anchor=\"middle\">"
      << fmt(fx) << "</text>\n";
    s << "<text x=\"" << ml - 6 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">" << fmt(fy)
      << "</text>\n";
  }
  s << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
    << escape(x_label) << "</text>\n";
  s << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& sr = series[k];
    const char* color = kPalette[k % kPalette.size()];
    s << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < std::min(sr.x.size(), sr.y.size()); ++i) {
      if (!std::isfinite(sr.x[i]) || !std::isfinite(sr.y[i])) continue;
      s << fmt(px(sr.x[i]), "%.2f") << ',' << fmt(py(sr.y[i]), "%.2f") << ' ';
    }
    s << "\"/>\n";
    const double ly = mt + 14.0 * static_cast<double>(k);
    s << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 28
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << ml + pw + 32 << "\" y=\"" << ly + 4 << "\">" << escape(sr.label)
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace tpt::diag
