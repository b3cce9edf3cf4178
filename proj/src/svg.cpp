#include "ubsgd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <cstdio>

namespace ubsgd {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40,
                 kBottom = 50;

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

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

}  // namespace

std::string render_svg(const LineChart& c) {
  std::vector<double> vals;
  for (double v : c.y)
    if (std::isfinite(v)) vals.push_back(v);
  if (c.rule && std::isfinite(*c.rule)) vals.push_back(*c.rule);

  bool log_y = c.log_y && !vals.empty() &&
               std::all_of(vals.begin(), vals.end(), [](double v) { return v > 0; });
  auto tf = [&](double v) { return log_y ? std::log10(v) : v; };

  double lo = 0.0, hi = 1.0;
  if (!vals.empty()) {
    lo = tf(*std::min_element(vals.begin(), vals.end()));
    hi = tf(*std::max_element(vals.begin(), vals.end()));
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  const double n = std::max<double>(2.0, static_cast<double>(c.y.size()));
  auto px = [&](double i) { return kLeft + pw * i / (n - 1.0); };
  auto py = [&](double v) { return kTop + ph * (1.0 - (tf(v) - lo) / (hi - lo)); };

  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(c.title) << "</text>\n"
    << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int t = 0; t <= 4; ++t) {
    const double tv = lo + (hi - lo) * t / 4.0;
    const double yy = kTop + ph * (1.0 - t / 4.0);
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(yy + 4)
      << "\" text-anchor=\"end\" font-size=\"11\">" << tick(log_y ? std::pow(10.0, tv) : tv)
      << "</text>\n";
  }
  s << "<text x=\"" << kLeft << "\" y=\"" << kH - 28 << "\" font-size=\"11\">1</text>\n"
    << "<text x=\"" << kW - kRight << "\" y=\"" << kH - 28
    << "\" text-anchor=\"end\" font-size=\"11\">" << c.y.size() << "</text>\n"
    << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 12
    << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(c.x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" font-size=\"12\" transform=\"rotate(-90 16 "
    << kTop + ph / 2 << ")\" text-anchor=\"middle\">" << escape(c.y_label)
    << (log_y ? " (log)" : "") << "</text>\n";

  // Thin long series to at most ~2000 vertices; keep the per-bucket max.
  const size_t stride = std::max<size_t>(1, c.y.size() / 2000);
  s << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
  for (size_t i = 0; i < c.y.size(); i += stride) {
    double v = -INFINITY;
    for (size_t j = i; j < std::min(c.y.size(), i + stride); ++j)
      if (std::isfinite(c.y[j])) v = std::max(v, c.y[j]);
    if (!std::isfinite(v) || (log_y && v <= 0)) continue;
    s << fmt(px(static_cast<double>(i))) << ',' << fmt(py(v)) << ' ';
  }
  s << "\"/>\n";

  if (c.rule && std::isfinite(*c.rule)) {
    const double yy = py(*c.rule);
    s << "<line x1=\"" << kLeft << "\" x2=\"" << kW - kRight << "\" y1=\"" << fmt(yy)
      << "\" y2=\"" << fmt(yy) << "\" stroke=\"#d62728\" stroke-dasharray=\"6 4\"/>\n"
      << "<text x=\"" << kW - kRight - 4 << "\" y=\"" << fmt(yy - 5)
      << "\" text-anchor=\"end\" font-size=\"11\" fill=\"#d62728\">" << escape(c.rule_label)
      << " = " << tick(*c.rule) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace ubsgd
