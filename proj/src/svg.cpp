#include "lab/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "lab/error.hpp"

namespace lab::svg {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

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

// Comments must not contain "--".
std::string comment_safe(std::string s) {
  for (std::size_t p = s.find("--"); p != std::string::npos; p = s.find("--")) s.replace(p, 2, "- -");
  return s;
}

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;
  double map(double v, double a, double b) const {
    const double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return a + t * (b - a);
  }
};

Axis make_axis(const std::vector<Series>& series, bool use_x, bool log) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Series& s : series) {
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v) || (log && v <= 0.0)) continue;
      const double u = log ? std::log10(v) : v;
      lo = std::min(lo, u);
      hi = std::max(hi, u);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.04 * (hi - lo);
  return Axis{lo - pad, hi + pad, log};
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

Series ecdf(const std::string& label, std::vector<double> samples, const std::vector<double>& weights) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return samples[a] < samples[b]; });
  double total = weights.empty() ? static_cast<double>(samples.size())
                                 : std::accumulate(weights.begin(), weights.end(), 0.0);
  Series s{label, {}, {}, Style::Steps};
  double acc = 0.0;
  for (std::size_t i : order) {
    if (!std::isfinite(samples[i])) continue;
    acc += weights.empty() ? 1.0 : weights[i];
    s.x.push_back(samples[i]);
    s.y.push_back(acc / total);
  }
  return s;
}

void write(const Plot& plot, const std::filesystem::path& path, const std::map<std::string, std::string>& provenance) {
  std::ofstream os(path);
  if (!os) throw DiagnosticError("cannot open " + path.string());
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<!--\n";
  for (const auto& [k, v] : provenance) os << "  " << comment_safe(k) << ": " << comment_safe(v) << '\n';
  os << "-->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const Axis ax = make_axis(plot.series, true, plot.log_x);
  const Axis ay = make_axis(plot.series, false, plot.log_y);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\"" << y0 - y1
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = ax.lo + (ax.hi - ax.lo) * k / 4.0, fy = ay.lo + (ay.hi - ay.lo) * k / 4.0;
    const double px = x0 + (x1 - x0) * k / 4.0, py = y0 + (y1 - y0) * k / 4.0;
    os << "<text x=\"" << px << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
       << number(ax.log ? std::pow(10.0, fx) : fx) << "</text>\n";
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
       << number(ay.log ? std::pow(10.0, fy) : fy) << "</text>\n";
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kTop - 16 << "\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(plot.title) << "</text>\n";
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
     << escape(plot.xlabel) << "</text>\n";
  os << "<text transform=\"translate(16," << (y0 + y1) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(plot.ylabel) << "</text>\n";
  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const Series& series = plot.series[s];
    const char* color = kColors[s % std::size(kColors)];
    auto px = [&](double v) { return ax.map(v, x0, x1); };
    auto py = [&](double v) { return ay.map(v, y0, y1); };
    auto ok = [&](std::size_t i) {
      return std::isfinite(series.x[i]) && std::isfinite(series.y[i]) && (!plot.log_x || series.x[i] > 0) &&
             (!plot.log_y || series.y[i] > 0);
    };
    const std::size_t n = std::min(series.x.size(), series.y.size());
    if (series.style == Style::Points) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!ok(i)) continue;
        os << "<circle cx=\"" << px(series.x[i]) << "\" cy=\"" << py(series.y[i]) << "\" r=\"1.5\" fill=\"" << color
           << "\" fill-opacity=\"0.5\"/>\n";
      }
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
      double prev_y = 0.0;
      bool first = true;
      for (std::size_t i = 0; i < n; ++i) {
        if (!ok(i)) continue;
        if (series.style == Style::Steps && !first) os << px(series.x[i]) << ',' << prev_y << ' ';
        prev_y = py(series.y[i]);
        os << px(series.x[i]) << ',' << prev_y << ' ';
        first = false;
      }
      os << "\"/>\n";
    }
    const double ly = kTop + 16 + 18.0 * static_cast<double>(s);
    os << "<rect x=\"" << x1 + 10 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"10\" fill=\"" << color
       << "\"/>\n<text x=\"" << x1 + 26 << "\" y=\"" << ly << "\">" << escape(series.label) << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw DiagnosticError("failed writing " + path.string());
}

}  // namespace lab::svg
