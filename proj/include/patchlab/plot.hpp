#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "patchlab/eval.hpp"

namespace patchlab {

namespace detail {

inline std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}
inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline const char* plot_color(std::size_t i) {
  static const char* palette[] = {
      "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
      "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
      "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173"};
  return palette[i % 15];
}

}  // namespace detail

// Renders one ROC figure as SVG: a labeled curve per report (AUC in the
// legend) plus the chance diagonal. SVG is text, so identical inputs give
// byte-identical files.
inline std::string emit_roc_plot(const std::vector<EvalReport>& reports,
                                 const std::string& out_path) {
  if (reports.empty()) throw ContractError("emit_roc_plot: empty report list");
  for (const auto& r : reports)
    if (r.split != reports.front().split)
      throw ContractError("emit_roc_plot: reports mix splits");

  const int W = 720, H = 560;
  const double x0 = 70, y0 = 40, pw = 420, ph = 420;  // plot box
  auto px = [&](double fpr) { return x0 + fpr * pw; };
  auto py = [&](double tpr) { return y0 + (1.0 - tpr) * ph; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(W) +
         "\" height=\"" + std::to_string(H) + "\" viewBox=\"0 0 " + std::to_string(W) +
         " " + std::to_string(H) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<rect x=\"" + detail::fixed4(x0) + "\" y=\"" + detail::fixed4(y0) +
         "\" width=\"" + detail::fixed4(pw) + "\" height=\"" + detail::fixed4(ph) +
         "\" fill=\"none\" stroke=\"#333\"/>\n";

  // axis ticks every 0.2
  for (int i = 0; i <= 5; ++i) {
    double f = i / 5.0;
    svg += "<line x1=\"" + detail::fixed4(px(f)) + "\" y1=\"" + detail::fixed4(y0 + ph) +
           "\" x2=\"" + detail::fixed4(px(f)) + "\" y2=\"" + detail::fixed4(y0 + ph + 6) +
           "\" stroke=\"#333\"/>\n";
    svg += "<text x=\"" + detail::fixed4(px(f)) + "\" y=\"" + detail::fixed4(y0 + ph + 20) +
           "\" font-size=\"12\" text-anchor=\"middle\">" + detail::fixed3(f).substr(0, 3) +
           "</text>\n";
    svg += "<line x1=\"" + detail::fixed4(x0 - 6) + "\" y1=\"" + detail::fixed4(py(f)) +
           "\" x2=\"" + detail::fixed4(x0) + "\" y2=\"" + detail::fixed4(py(f)) +
           "\" stroke=\"#333\"/>\n";
    svg += "<text x=\"" + detail::fixed4(x0 - 10) + "\" y=\"" + detail::fixed4(py(f) + 4) +
           "\" font-size=\"12\" text-anchor=\"end\">" + detail::fixed3(f).substr(0, 3) +
           "</text>\n";
  }
  svg += "<text x=\"" + detail::fixed4(x0 + pw / 2) + "\" y=\"" + detail::fixed4(y0 + ph + 40) +
         "\" font-size=\"14\" text-anchor=\"middle\">False positive rate</text>\n";
  svg += "<text x=\"18\" y=\"" + detail::fixed4(y0 + ph / 2) +
         "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         detail::fixed4(y0 + ph / 2) + ")\">True positive rate</text>\n";
  svg += "<text x=\"" + detail::fixed4(x0 + pw / 2) + "\" y=\"24\" font-size=\"15\" "
         "text-anchor=\"middle\">ROC (" + reports.front().split + " split)</text>\n";

  // chance diagonal
  svg += "<line x1=\"" + detail::fixed4(px(0)) + "\" y1=\"" + detail::fixed4(py(0)) +
         "\" x2=\"" + detail::fixed4(px(1)) + "\" y2=\"" + detail::fixed4(py(1)) +
         "\" stroke=\"#999\" stroke-dasharray=\"5,4\"/>\n";

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::string pts;
    for (const auto& p : r.roc) {
      if (!pts.empty()) pts += " ";
      pts += detail::fixed4(px(p.fpr)) + "," + detail::fixed4(py(p.tpr));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(detail::plot_color(i)) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    // legend entry
    double ly = y0 + 12 + 22.0 * static_cast<double>(i);
    double lx = x0 + pw + 24;
    svg += "<line x1=\"" + detail::fixed4(lx) + "\" y1=\"" + detail::fixed4(ly) +
           "\" x2=\"" + detail::fixed4(lx + 22) + "\" y2=\"" + detail::fixed4(ly) +
           "\" stroke=\"" + detail::plot_color(i) + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + detail::fixed4(lx + 28) + "\" y=\"" + detail::fixed4(ly + 4) +
           "\" font-size=\"12\">" + r.config_name +
           (r.scale.empty() ? "" : " [" + r.scale + "]") +
           " (AUC=" + detail::fixed3(r.auc) + ")</text>\n";
  }
  svg += "</svg>\n";

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw IoError("cannot write plot " + out_path);
  out << svg;
  if (!out) throw IoError("short write: " + out_path);
  return out_path;
}

}  // namespace patchlab
