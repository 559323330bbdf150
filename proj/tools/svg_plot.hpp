#pragma once

#include <Eigen/Core>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "convsccs/errors.hpp"

namespace convsccs::cli {

// Minimal standalone SVG line chart: one curve over lags with an optional
// confidence band and a reference line at 1.
inline void write_ri_plot(const std::string& path, const std::string& title,
                          const Eigen::VectorXd& curve,
                          const Eigen::VectorXd& lower,
                          const Eigen::VectorXd& upper) {
  const int n = static_cast<int>(curve.size());
  const double width = 640.0, height = 400.0;
  const double ml = 60.0, mr = 20.0, mt = 40.0, mb = 45.0;
  const bool has_band = lower.size() == n && upper.size() == n;

  double y_min = curve.minCoeff(), y_max = curve.maxCoeff();
  if (has_band) {
    y_min = std::min(y_min, lower.minCoeff());
    y_max = std::max(y_max, upper.maxCoeff());
  }
  y_min = std::min(y_min, 1.0);
  y_max = std::max(y_max, 1.0);
  const double pad = 0.08 * std::max(1e-9, y_max - y_min);
  y_min -= pad;
  y_max += pad;

  const auto x_of = [&](double lag) {
    return ml + (width - ml - mr) * (n > 1 ? lag / (n - 1) : 0.5);
  };
  const auto y_of = [&](double v) {
    return height - mb - (height - mt - mb) * (v - y_min) / (y_max - y_min);
  };

  std::ostringstream svg;
  svg << std::setprecision(8);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";

  if (has_band) {
    svg << "<polygon fill=\"#aecde8\" fill-opacity=\"0.6\" stroke=\"none\" "
           "points=\"";
    for (int l = 0; l < n; ++l) svg << x_of(l) << "," << y_of(upper[l]) << " ";
    for (int l = n - 1; l >= 0; --l) {
      svg << x_of(l) << "," << y_of(lower[l]) << " ";
    }
    svg << "\"/>\n";
  }

  svg << "<line x1=\"" << x_of(0) << "\" y1=\"" << y_of(1.0) << "\" x2=\""
      << x_of(n - 1) << "\" y2=\"" << y_of(1.0)
      << "\" stroke=\"#999999\" stroke-dasharray=\"4 3\"/>\n";

  svg << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" "
         "points=\"";
  for (int l = 0; l < n; ++l) svg << x_of(l) << "," << y_of(curve[l]) << " ";
  svg << "\"/>\n";

  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << height - mb << "\" x2=\""
      << width - mr << "\" y2=\"" << height - mb << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << y_of(y_max - pad)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << std::setprecision(3) << y_max - pad << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << y_of(y_min + pad)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
      << y_min + pad << "</text>\n";
  svg << "<text x=\"" << ml - 8 << "\" y=\"" << y_of(1.0) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1"
         "</text>\n";
  svg << "<text x=\"" << x_of(0) << "\" y=\"" << height - mb + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">0</text>\n";
  svg << "<text x=\"" << x_of(n - 1) << "\" y=\"" << height - mb + 18
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"11\">" << n - 1 << "</text>\n";
  svg << "<text x=\"" << (ml + width - mr) / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">lag (intervals since exposure start)</text>\n";
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write plot file " + path);
  out << svg.str();
}

}  // namespace convsccs::cli
