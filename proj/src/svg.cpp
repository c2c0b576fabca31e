#include "resfit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace resfit::svg {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 80.0;
constexpr double kRight = 150.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v, int digits = 2) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string label_value(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", v);
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

struct Scale {
  double lo = 0.0, hi = 1.0;
  bool log = false;
  double pixel_lo = 0.0, pixel_hi = 1.0;

  double transform(double v) const { return log ? std::log10(v) : v; }
  double operator()(double v) const {
    const double t = (transform(v) - lo) / (hi - lo);
    return pixel_lo + t * (pixel_hi - pixel_lo);
  }
  bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
};

Scale make_scale(const std::vector<double>& values, bool log, double pixel_lo, double pixel_hi) {
  Scale s;
  s.log = log;
  s.pixel_lo = pixel_lo;
  s.pixel_hi = pixel_hi;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values) {
    if (!s.usable(v)) continue;
    lo = std::min(lo, s.transform(v));
    hi = std::max(hi, s.transform(v));
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  if (log) {
    lo = std::floor(lo);
    hi = std::ceil(hi);
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  s.lo = lo;
  s.hi = hi;
  return s;
}

std::vector<double> ticks(const Scale& s) {
  std::vector<double> out;
  if (s.log) {
    const int step = std::max(1, static_cast<int>(std::ceil((s.hi - s.lo) / 8.0)));
    for (int e = static_cast<int>(s.lo); e <= static_cast<int>(s.hi); e += step)
      out.push_back(std::pow(10.0, e));
  } else {
    const double raw = (s.hi - s.lo) / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      step = m * mag;
      if (step >= raw) break;
    }
    for (double v = std::ceil(s.lo / step) * step; v <= s.hi + 1e-9 * step; v += step)
      out.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  }
  return out;
}

void frame(std::ostringstream& os, const Axes& axes, const Scale& sx, const Scale& sy) {
  os << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\""
     << num(kWidth - kLeft - kRight) << "\" height=\"" << num(kHeight - kTop - kBottom)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : ticks(sx)) {
    const double px = sx(t);
    os << "<line x1=\"" << num(px) << "\" y1=\"" << num(kHeight - kBottom) << "\" x2=\"" << num(px)
       << "\" y2=\"" << num(kHeight - kBottom + 5) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(px) << "\" y=\"" << num(kHeight - kBottom + 20)
       << "\" font-size=\"12\" text-anchor=\"middle\">" << label_value(t) << "</text>\n";
  }
  for (double t : ticks(sy)) {
    const double py = sy(t);
    os << "<line x1=\"" << num(kLeft - 5) << "\" y1=\"" << num(py) << "\" x2=\"" << num(kLeft)
       << "\" y2=\"" << num(py) << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << num(kLeft - 8) << "\" y=\"" << num(py + 4)
       << "\" font-size=\"12\" text-anchor=\"end\">" << label_value(t) << "</text>\n";
  }
  os << "<text x=\"" << num(0.5 * (kLeft + kWidth - kRight)) << "\" y=\"" << num(kTop - 15)
     << "\" font-size=\"14\" text-anchor=\"middle\">" << escape(axes.title) << "</text>\n";
  os << "<text x=\"" << num(0.5 * (kLeft + kWidth - kRight)) << "\" y=\"" << num(kHeight - 15)
     << "\" font-size=\"13\" text-anchor=\"middle\">" << escape(axes.x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << num(0.5 * (kTop + kHeight - kBottom))
     << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << num(0.5 * (kTop + kHeight - kBottom)) << ")\">" << escape(axes.y_label) << "</text>\n";
}

std::string header() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth, 0) + "\" height=\"" +
         num(kHeight, 0) + "\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace

std::string line_plot(const Axes& axes, const std::vector<Series>& series) {
  std::vector<double> xs, ys;
  for (const auto& s : series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  const Scale sx = make_scale(xs, axes.log_x, kLeft, kWidth - kRight);
  const Scale sy = make_scale(ys, axes.log_y, kHeight - kBottom, kTop);

  std::ostringstream os;
  os << header();
  frame(os, axes, sx, sy);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::ostringstream pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!sx.usable(s.x[i]) || !sy.usable(s.y[i])) continue;
      pts << num(sx(s.x[i])) << ',' << num(sy(s.y[i])) << ' ';
      os << "<circle cx=\"" << num(sx(s.x[i])) << "\" cy=\"" << num(sy(s.y[i]))
         << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    os << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\"/>\n";
    const double ly = kTop + 15.0 + 18.0 * static_cast<double>(k);
    os << "<line x1=\"" << num(kWidth - kRight + 10) << "\" y1=\"" << num(ly) << "\" x2=\""
       << num(kWidth - kRight + 30) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(kWidth - kRight + 35) << "\" y=\"" << num(ly + 4)
       << "\" font-size=\"11\">" << escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string heatmap(const Axes& axes, const std::vector<double>& x, const std::vector<double>& y,
                    const std::vector<double>& values, const std::string& value_label) {
  const Scale sx = make_scale(x, axes.log_x, kLeft, kWidth - kRight);
  const Scale sy = make_scale(y, axes.log_y, kHeight - kBottom, kTop);
  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  if (!std::isfinite(vmin)) vmin = 0.0, vmax = 1.0;
  if (vmax - vmin < 1e-12) vmax = vmin + 1.0;

  // Cell edges halfway between neighboring centers, in transformed space.
  const auto edges = [](const std::vector<double>& c, const Scale& s) {
    std::vector<double> t(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) t[i] = s.transform(c[i]);
    std::vector<double> e(c.size() + 1);
    for (std::size_t i = 1; i < c.size(); ++i) e[i] = 0.5 * (t[i - 1] + t[i]);
    const double first = c.size() > 1 ? t[1] - t[0] : 1.0;
    const double last = c.size() > 1 ? t.back() - t[t.size() - 2] : 1.0;
    e.front() = t.front() - 0.5 * first;
    e.back() = t.back() + 0.5 * last;
    Scale linear = s;
    linear.log = false;
    for (double& v : e) v = linear(v);
    return e;
  };
  std::ostringstream os;
  os << header();
  const std::vector<double> ex = edges(x, sx);
  const std::vector<double> ey = edges(y, sy);
  for (std::size_t iy = 0; iy < y.size(); ++iy) {
    for (std::size_t ix = 0; ix < x.size(); ++ix) {
      const double v = values[iy * x.size() + ix];
      std::string fill = "#cccccc";
      if (std::isfinite(v)) {
        const double t = (v - vmin) / (vmax - vmin);
        const int r = static_cast<int>(std::lround(255.0 * t));
        const int b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
        char buf[16];
        std::snprintf(buf, sizeof buf, "#%02x40%02x", r, b);
        fill = buf;
      }
      const double x0 = std::min(ex[ix], ex[ix + 1]), x1 = std::max(ex[ix], ex[ix + 1]);
      const double y0 = std::min(ey[iy], ey[iy + 1]), y1 = std::max(ey[iy], ey[iy + 1]);
      os << "<rect x=\"" << num(x0) << "\" y=\"" << num(y0) << "\" width=\"" << num(x1 - x0)
         << "\" height=\"" << num(y1 - y0) << "\" fill=\"" << fill << "\"><title>"
         << label_value(v) << "</title></rect>\n";
    }
  }
  frame(os, axes, sx, sy);
  const double bx = kWidth - kRight + 20;
  os << "<text x=\"" << num(bx) << "\" y=\"" << num(kTop + 10) << "\" font-size=\"11\">"
     << escape(value_label) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double t = k / 4.0;
    const int r = static_cast<int>(std::lround(255.0 * t));
    const int b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x40%02x", r, b);
    const double yy = kTop + 25.0 + 20.0 * (4 - k);
    os << "<rect x=\"" << num(bx) << "\" y=\"" << num(yy) << "\" width=\"15\" height=\"15\" fill=\""
       << buf << "\"/>\n";
    os << "<text x=\"" << num(bx + 20) << "\" y=\"" << num(yy + 12) << "\" font-size=\"11\">"
       << label_value(vmin + t * (vmax - vmin)) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace resfit::svg
