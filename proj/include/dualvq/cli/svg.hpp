#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dualvq/tasks/diarization.hpp"

namespace dualvq::svg {

inline constexpr int kWidth = 720;
inline constexpr int kHeight = 360;
inline constexpr int kMargin = 50;

inline const char* palette(std::size_t i) {
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return colours[i % 7];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::string header(const std::string& title) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
  return os.str();
}

/// Line chart; each series is a list of (x, y) points.
inline std::string line_chart(const std::string& title, const std::map<std::string, std::vector<std::pair<double, double>>>& series,
                              const std::string& x_label, const std::string& y_label) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& [_, pts] : series) {
    for (const auto& [x, y] : pts) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = kWidth - 2.0 * kMargin, ph = kHeight - 2.0 * kMargin;
  auto px = [&](double x) { return kMargin + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kHeight - kMargin - (y - y0) / (y1 - y0) * ph; };
  std::ostringstream os;
  os << header(title);
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
     << "</text>\n";
  os << "<text x=\"14\" y=\"" << kHeight / 2 << "\" transform=\"rotate(-90 14 " << kHeight / 2
     << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
  os << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 4 << "\" text-anchor=\"end\">" << y1 << "</text>\n";
  os << "<text x=\"" << kMargin - 4 << "\" y=\"" << kHeight - kMargin << "\" text-anchor=\"end\">" << y0 << "</text>\n";
  os << "<text x=\"" << kMargin << "\" y=\"" << kHeight - kMargin + 14 << "\">" << x0 << "</text>\n";
  os << "<text x=\"" << kWidth - kMargin << "\" y=\"" << kHeight - kMargin + 14 << "\" text-anchor=\"end\">" << x1
     << "</text>\n";
  std::size_t k = 0;
  for (const auto& [name, pts] : series) {
    os << "<polyline fill=\"none\" stroke=\"" << palette(k) << "\" points=\"";
    for (const auto& [x, y] : pts) os << px(x) << ',' << py(y) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << kWidth - kMargin - 4 << "\" y=\"" << kMargin + 14 + 14 * k << "\" text-anchor=\"end\" fill=\""
       << palette(k) << "\">" << escape(name) << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

/// Bar chart of counts per index.
inline std::string bar_chart(const std::string& title, const std::vector<std::size_t>& counts, const std::string& x_label) {
  const double pw = kWidth - 2.0 * kMargin, ph = kHeight - 2.0 * kMargin;
  const std::size_t top = counts.empty() ? 1 : std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
  const double bw = counts.empty() ? pw : pw / static_cast<double>(counts.size());
  std::ostringstream os;
  os << header(title);
  os << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double h = ph * static_cast<double>(counts[i]) / static_cast<double>(top);
    os << "<rect x=\"" << kMargin + bw * static_cast<double>(i) << "\" y=\"" << kHeight - kMargin - h << "\" width=\""
       << std::max(bw - 1.0, 0.5) << "\" height=\"" << h << "\" fill=\"" << palette(0) << "\"/>\n";
  }
  os << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
     << "</text>\n";
  os << "<text x=\"" << kMargin - 4 << "\" y=\"" << kMargin + 4 << "\" text-anchor=\"end\">" << top << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

/// One lane per named segmentation, coloured by speaker label.
inline std::string timeline(const std::string& title,
                            const std::vector<std::pair<std::string, std::vector<DiarizationSegment>>>& lanes) {
  double end = 0.0;
  std::map<std::string, std::size_t> colour;
  for (const auto& [_, segs] : lanes) {
    for (const auto& s : segs) {
      end = std::max(end, s.end());
      colour.emplace(s.speaker, colour.size());
    }
  }
  if (end <= 0.0) end = 1.0;
  const double pw = kWidth - 2.0 * kMargin - 60;
  const double left = kMargin + 60;
  std::ostringstream os;
  os << header(title);
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const double y = kMargin + 50.0 * static_cast<double>(i);
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + 20 << "\" text-anchor=\"end\">" << escape(lanes[i].first)
       << "</text>\n";
    for (const auto& s : lanes[i].second) {
      os << "<rect x=\"" << left + s.onset / end * pw << "\" y=\"" << y << "\" width=\"" << s.duration / end * pw
         << "\" height=\"30\" fill=\"" << palette(colour[s.speaker]) << "\"><title>" << escape(s.speaker)
         << "</title></rect>\n";
    }
  }
  std::size_t k = 0;
  for (const auto& [name, c] : colour) {
    os << "<text x=\"" << left + 90.0 * static_cast<double>(k++) << "\" y=\"" << kHeight - 20 << "\" fill=\""
       << palette(c) << "\">" << escape(name) << "</text>\n";
  }
  os << "<text x=\"" << left + pw << "\" y=\"" << kHeight - 20 << "\" text-anchor=\"end\">" << end << " s</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace dualvq::svg
