#include "lanereg/harness/svg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "lanereg/harness/stats.hpp"

namespace lanereg::harness {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 160, kTop = 60, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

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

std::string colour(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (std::isnan(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

class Canvas {
 public:
  Canvas(const ChartText& text, Range xr, Range yr) : xr_(xr), yr_(yr) {
    os_ << std::fixed << std::setprecision(2);
    os_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    if (!text.note.empty()) os_ << "<desc>" << escape(text.note) << "</desc>\n";
    os_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os_ << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape(text.title)
        << "</text>\n";
    if (!text.note.empty()) {
      os_ << "<text x=\"" << kWidth / 2 << "\" y=\"42\" text-anchor=\"middle\" font-size=\"10\" fill=\"#666\">"
          << escape(text.note) << "</text>\n";
    }
    os_ << "<text x=\"" << kLeft + plot_w() / 2 << "\" y=\"" << kHeight - 16 << "\" text-anchor=\"middle\">"
        << escape(text.x_label) << "</text>\n";
    os_ << "<text transform=\"translate(18," << kTop + plot_h() / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
        << escape(text.y_label) << "</text>\n";
    os_ << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w() << "\" height=\"" << plot_h()
        << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double v = yr_.lo + (yr_.hi - yr_.lo) * i / 4.0;
      os_ << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w() << "\" y1=\"" << py(v) << "\" y2=\"" << py(v)
          << "\" stroke=\"#ddd\"/>\n";
      os_ << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
    }
  }

  void x_ticks() {
    for (int i = 0; i <= 4; ++i) {
      const double v = xr_.lo + (xr_.hi - xr_.lo) * i / 4.0;
      os_ << "<text x=\"" << px(v) << "\" y=\"" << kTop + plot_h() + 16 << "\" text-anchor=\"middle\">" << fmt(v)
          << "</text>\n";
    }
  }

  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = kTop + 14 + 18.0 * static_cast<double>(i);
      os_ << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
          << colour(i) << "\"/>\n";
      os_ << "<text x=\"" << kWidth - kRight + 30 << "\" y=\"" << y << "\">" << escape(names[i]) << "</text>\n";
    }
  }

  double plot_w() const { return kWidth - kLeft - kRight; }
  double plot_h() const { return kHeight - kTop - kBottom; }
  double px(double x) const { return kLeft + (x - xr_.lo) / (xr_.hi - xr_.lo) * plot_w(); }
  double py(double y) const { return kTop + plot_h() - (y - yr_.lo) / (yr_.hi - yr_.lo) * plot_h(); }
  std::ostream& out() { return os_; }
  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  static std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
  }
  Range xr_, yr_;
  std::ostringstream os_;
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
}

}  // namespace

std::string line_chart(const ChartText& text, const std::vector<Series>& series) {
  Range xr, yr;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isnan(s.y[i])) continue;
      xr.add(s.x[i]);
      yr.add(s.y[i]);
    }
  }
  xr.finish();
  yr.finish();
  Canvas c(text, xr, yr);
  c.x_ticks();
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    c.out() << "<polyline fill=\"none\" stroke=\"" << colour(k) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isnan(s.y[i])) continue;
      c.out() << c.px(s.x[i]) << ',' << c.py(s.y[i]) << ' ';
    }
    c.out() << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isnan(s.y[i])) continue;
      c.out() << "<circle cx=\"" << c.px(s.x[i]) << "\" cy=\"" << c.py(s.y[i]) << "\" r=\"2.5\" fill=\"" << colour(k)
              << "\"/>\n";
    }
  }
  c.legend(names);
  return c.finish();
}

std::string box_plot(const ChartText& text, const std::vector<std::pair<std::string, std::vector<double>>>& groups) {
  Range xr, yr;
  xr.lo = 0.0;
  xr.hi = static_cast<double>(groups.size());
  for (const auto& [name, values] : groups) {
    for (double v : values) yr.add(v);
  }
  yr.add(0.0);
  yr.finish();
  Canvas c(text, xr, yr);
  c.out() << "<line x1=\"" << c.px(0) << "\" x2=\"" << c.px(xr.hi) << "\" y1=\"" << c.py(0) << "\" y2=\"" << c.py(0)
          << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> v;
    for (double x : groups[g].second) {
      if (!std::isnan(x)) v.push_back(x);
    }
    const double cx = c.px(static_cast<double>(g) + 0.5);
    const double half = 0.25 * c.plot_w() / std::max<double>(1.0, static_cast<double>(groups.size()));
    c.out() << "<text x=\"" << cx << "\" y=\"" << kTop + c.plot_h() + 16 << "\" text-anchor=\"middle\">"
            << escape(groups[g].first) << "</text>\n";
    if (v.empty()) continue;
    const double q1 = quantile(v, 0.25), q2 = quantile(v, 0.5), q3 = quantile(v, 0.75);
    const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
    const std::string col = colour(g);
    c.out() << "<line x1=\"" << cx << "\" x2=\"" << cx << "\" y1=\"" << c.py(lo) << "\" y2=\"" << c.py(hi)
            << "\" stroke=\"" << col << "\"/>\n";
    c.out() << "<rect x=\"" << cx - half << "\" y=\"" << c.py(q3) << "\" width=\"" << 2 * half << "\" height=\""
            << std::max(1.0, c.py(q1) - c.py(q3)) << "\" fill=\"" << col << "\" fill-opacity=\"0.3\" stroke=\"" << col
            << "\"/>\n";
    c.out() << "<line x1=\"" << cx - half << "\" x2=\"" << cx + half << "\" y1=\"" << c.py(q2) << "\" y2=\""
            << c.py(q2) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    c.out() << "<circle cx=\"" << cx << "\" cy=\"" << c.py(mean(v)) << "\" r=\"3\" fill=\"white\" stroke=\"" << col
            << "\"/>\n";
  }
  return c.finish();
}

std::string bar_chart(const ChartText& text, const std::vector<std::string>& categories, const std::vector<Series>& series) {
  Range xr, yr;
  xr.lo = 0.0;
  xr.hi = static_cast<double>(categories.size());
  yr.add(0.0);
  for (const auto& s : series) {
    for (double v : s.y) yr.add(v);
  }
  yr.finish();
  yr.lo = std::min(yr.lo, 0.0);
  Canvas c(text, xr, yr);
  const double group_w = c.plot_w() / std::max<double>(1.0, static_cast<double>(categories.size()));
  const double bar_w = 0.8 * group_w / std::max<double>(1.0, static_cast<double>(series.size()));
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) names.push_back(series[k].name);
  for (std::size_t g = 0; g < categories.size(); ++g) {
    const double x0 = kLeft + group_w * static_cast<double>(g) + 0.1 * group_w;
    c.out() << "<text x=\"" << x0 + 0.4 * group_w << "\" y=\"" << kTop + c.plot_h() + 16 << "\" text-anchor=\"middle\">"
            << escape(categories[g]) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (g >= series[k].y.size() || std::isnan(series[k].y[g])) continue;
      const double v = series[k].y[g];
      const double top = c.py(std::max(v, 0.0)), bottom = c.py(std::min(v, 0.0));
      c.out() << "<rect x=\"" << x0 + bar_w * static_cast<double>(k) << "\" y=\"" << top << "\" width=\"" << bar_w
              << "\" height=\"" << std::max(0.5, bottom - top) << "\" fill=\"" << colour(k) << "\"/>\n";
    }
  }
  c.legend(names);
  return c.finish();
}

}  // namespace lanereg::harness
