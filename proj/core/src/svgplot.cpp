#include "avemdpo/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace avemdpo::svgplot {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 610.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 340.0;

const char* kPalette[] = {"#4d7cc7", "#d98032", "#5aa469", "#b35ab0",
                          "#908f37", "#c75454"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string header() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " +
         num(kWidth) + " " + num(kHeight) +
         "\" font-family=\"sans-serif\" font-size=\"13\">\n"
         "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string frame() {
  return "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kBottom) + "\" x2=\"" +
         num(kRight) + "\" y2=\"" + num(kBottom) +
         "\" stroke=\"#333\" stroke-width=\"1\"/>\n<line x1=\"" + num(kLeft) +
         "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" +
         num(kBottom) + "\" stroke=\"#333\" stroke-width=\"1\"/>\n";
}

std::string title_text(const std::string& title) {
  return "<text x=\"" + num(kWidth / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
         escape(title) + "</text>\n";
}

std::string axis_label_y(const std::string& label) {
  return "<text x=\"18\" y=\"" + num((kTop + kBottom) / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         num((kTop + kBottom) / 2) + ")\">" + escape(label) + "</text>\n";
}

std::string legend(const std::vector<std::string>& names) {
  std::string out;
  double y = kTop;
  for (size_t i = 0; i < names.size(); ++i) {
    const char* color = kPalette[i % 6];
    out += "<rect x=\"" + num(kRight + 6) + "\" y=\"" + num(y) +
           "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    out += "<text x=\"" + num(kRight + 20) + "\" y=\"" + num(y + 9) +
           "\" font-size=\"11\">" + escape(names[i]) + "</text>\n";
    y += 16.0;
  }
  return out;
}

}  // namespace

std::string bar_chart_svg(const std::string& title,
                          const std::vector<std::string>& groups,
                          const std::vector<BarSeries>& series,
                          const std::string& y_label) {
  if (groups.empty() || series.empty()) {
    throw std::invalid_argument("bar chart needs groups and series");
  }
  double top = 0.0;
  for (const BarSeries& s : series) {
    if (s.values.size() != groups.size()) {
      throw std::invalid_argument("series '" + s.name + "' has " +
                                  std::to_string(s.values.size()) +
                                  " values for " +
                                  std::to_string(groups.size()) + " groups");
    }
    for (double v : s.values) {
      if (!std::isfinite(v) || v < 0.0) {
        throw std::invalid_argument("bar values must be finite and >= 0");
      }
      top = std::max(top, v);
    }
  }
  if (top == 0.0) top = 1.0;

  std::string out = header() + title_text(title) + axis_label_y(y_label);
  const double group_w = (kRight - kLeft) / (double)groups.size();
  const double bar_w = group_w * 0.8 / (double)series.size();
  for (size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + group_w * (double)g + group_w * 0.1;
    for (size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[g];
      const double h = (kBottom - kTop) * v / top;
      out += "<rect x=\"" + num(gx + bar_w * (double)s) + "\" y=\"" +
             num(kBottom - h) + "\" width=\"" + num(bar_w) + "\" height=\"" +
             num(h) + "\" fill=\"" + kPalette[s % 6] + "\"/>\n";
    }
    out += "<text x=\"" + num(gx + group_w * 0.4) + "\" y=\"" +
           num(kBottom + 18) + "\" text-anchor=\"middle\" font-size=\"11\">" +
           escape(groups[g]) + "</text>\n";
  }
  out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(kTop + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + num(top) + "</text>\n";
  std::vector<std::string> names;
  for (const BarSeries& s : series) names.push_back(s.name);
  out += legend(names) + frame() + "</svg>\n";
  return out;
}

std::string line_chart_svg(const std::string& title,
                           const std::vector<Curve>& curves,
                           const std::string& x_label,
                           const std::string& y_label) {
  if (curves.empty()) {
    throw std::invalid_argument("line chart needs at least one curve");
  }
  double x_lo = 0.0, x_hi = 0.0, y_lo = 0.0, y_hi = 0.0;
  bool first = true;
  for (const Curve& c : curves) {
    if (c.x.size() != c.y.size() || c.x.size() < 2) {
      throw std::invalid_argument("curve '" + c.name +
                                  "' needs matching x/y with >= 2 points");
    }
    for (size_t i = 0; i < c.x.size(); ++i) {
      if (!std::isfinite(c.x[i]) || !std::isfinite(c.y[i])) {
        throw std::invalid_argument("curve '" + c.name +
                                    "' has non-finite points");
      }
      if (first) {
        x_lo = x_hi = c.x[i];
        y_lo = y_hi = c.y[i];
        first = false;
      } else {
        x_lo = std::min(x_lo, c.x[i]);
        x_hi = std::max(x_hi, c.x[i]);
        y_lo = std::min(y_lo, c.y[i]);
        y_hi = std::max(y_hi, c.y[i]);
      }
    }
  }
  if (x_hi == x_lo) x_hi = x_lo + 1.0;
  if (y_hi == y_lo) y_hi = y_lo + 1.0;

  auto px = [&](double x) {
    return kLeft + (kRight - kLeft) * (x - x_lo) / (x_hi - x_lo);
  };
  auto py = [&](double y) {
    return kBottom - (kBottom - kTop) * (y - y_lo) / (y_hi - y_lo);
  };

  std::string out = header() + title_text(title) + axis_label_y(y_label);
  for (size_t i = 0; i < curves.size(); ++i) {
    std::string points;
    for (size_t k = 0; k < curves[i].x.size(); ++k) {
      points += num(px(curves[i].x[k])) + "," + num(py(curves[i].y[k])) + " ";
    }
    points.pop_back();
    out += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[i % 6]) +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
  }
  out += "<text x=\"" + num((kLeft + kRight) / 2) + "\" y=\"" +
         num(kBottom + 32) + "\" text-anchor=\"middle\">" + escape(x_label) +
         "</text>\n";
  out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(kBottom + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + num(y_lo) + "</text>\n";
  out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(kTop + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + num(y_hi) + "</text>\n";
  std::vector<std::string> names;
  for (const Curve& c : curves) names.push_back(c.name);
  out += legend(names) + frame() + "</svg>\n";
  return out;
}

}  // namespace avemdpo::svgplot
