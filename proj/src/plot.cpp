#include "paramcrop/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <vector>

namespace paramcrop {

namespace {

constexpr double kWidth = 720.0;
constexpr double kPanelHeight = 200.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kGap = 50.0;

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

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

struct Panel {
  const char* label;
  const char* color;
  double StepRecord::*field;
};

void panel(std::ostream& out, const MetricsLog& log, std::size_t total, const Panel& p, double y0) {
  double lo = 0.0, hi = 1.0;
  if (!log.records.empty()) {
    lo = hi = log.records.front().*p.field;
    for (const auto& r : log.records) {
      lo = std::min(lo, r.*p.field);
      hi = std::max(hi, r.*p.field);
    }
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double plot_w = kWidth - kLeft - kRight;
  const double xmax = static_cast<double>(std::max<std::size_t>(total, 1));
  const auto px = [&](double step) { return kLeft + plot_w * step / xmax; };
  const auto py = [&](double v) { return y0 + kPanelHeight * (1.0 - (v - lo) / (hi - lo)); };

  out << "<g class=\"panel\" data-metric=\"" << p.label << "\">\n";
  out << "<rect x=\"" << kLeft << "\" y=\"" << y0 << "\" width=\"" << plot_w << "\" height=\"" << kPanelHeight
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
  // axis ticks: x at 0, total/2, total; y at lo, mid, hi
  for (int i = 0; i <= 2; ++i) {
    const double s = xmax * i / 2.0;
    out << "<text x=\"" << num(px(s)) << "\" y=\"" << num(y0 + kPanelHeight + 15)
        << "\" font-size=\"11\" text-anchor=\"middle\">" << num(i == 2 ? static_cast<double>(total) : s)
        << "</text>\n";
    const double v = lo + (hi - lo) * i / 2.0;
    out << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(py(v) + 4)
        << "\" font-size=\"11\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  out << "<text x=\"" << num(kLeft + plot_w / 2) << "\" y=\"" << num(y0 + kPanelHeight + 32)
      << "\" font-size=\"12\" text-anchor=\"middle\">step</text>\n";
  out << "<text x=\"16\" y=\"" << num(y0 + kPanelHeight / 2) << "\" font-size=\"12\" text-anchor=\"middle\" "
      << "transform=\"rotate(-90 16 " << num(y0 + kPanelHeight / 2) << ")\">" << p.label << "</text>\n";
  out << "<polyline fill=\"none\" stroke=\"" << p.color << "\" stroke-width=\"1.2\" points=\"";
  for (const auto& r : log.records) {
    out << num(px(static_cast<double>(r.step))) << ',' << num(py(r.*p.field)) << ' ';
  }
  out << "\"/>\n</g>\n";
}

}  // namespace

void write_metrics_svg(std::ostream& out, const MetricsLog& log, std::size_t total_steps,
                       const std::string& title) {
  const Panel panels[] = {
      {"loss", "#1f77b4", &StepRecord::loss},
      {"iou", "#2ca02c", &StepRecord::iou},
      {"dist_norm", "#d62728", &StepRecord::dist_norm},
  };
  const double height = kTop + 3 * (kPanelHeight + kGap);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << kWidth << ' ' << height << "\" data-x-min=\"0\" data-x-max=\"" << total_steps
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">" << escape(title)
      << "</text>\n";
  for (int i = 0; i < 3; ++i) panel(out, log, total_steps, panels[i], kTop + i * (kPanelHeight + kGap));
  out << "</svg>\n";
}

}  // namespace paramcrop
