#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "scmine/dense.hpp"
#include "scmine/error.hpp"
#include "scmine/io.hpp"

// Scatter-plot SVG for 2-D embeddings: fixed 1000x1000 viewBox, coordinates
// min-max scaled into [50, 950] (a 5% margin), one circle per point, fill
// from a fixed 16-color palette assigned to categories in first-appearance
// order (cycling past 16).

namespace scmine::svg {

inline constexpr std::array<const char*, 16> kPalette = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
    "#98df8a", "#ff9896", "#c5b0d5", "#c49c94"};

inline std::string scatter_svg(const DenseMatrix& coords,
                               const std::vector<std::string>& categories) {
  if (coords.n_rows == 0) throw Error("scatter plot needs at least one point");
  if (coords.n_cols != 2) throw Error("scatter plot needs 2-D coordinates");
  if (categories.size() != coords.n_rows)
    throw Error("scatter plot: category count must match point count");

  double xmin = coords(0, 0), xmax = xmin, ymin = coords(0, 1), ymax = ymin;
  for (std::size_t i = 0; i < coords.n_rows; ++i) {
    xmin = std::min(xmin, coords(i, 0));
    xmax = std::max(xmax, coords(i, 0));
    ymin = std::min(ymin, coords(i, 1));
    ymax = std::max(ymax, coords(i, 1));
  }
  auto scale = [](double v, double lo, double hi) {
    if (hi == lo) return 500.0;
    return 50.0 + 900.0 * (v - lo) / (hi - lo);
  };

  std::vector<std::string> order;  // categories in first-appearance order
  auto color_of = [&](const std::string& cat) {
    auto it = std::find(order.begin(), order.end(), cat);
    std::size_t idx;
    if (it == order.end()) {
      idx = order.size();
      order.push_back(cat);
    } else {
      idx = static_cast<std::size_t>(it - order.begin());
    }
    return kPalette[idx % kPalette.size()];
  };

  std::string out =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 1000\" "
      "width=\"1000\" height=\"1000\">\n";
  for (std::size_t i = 0; i < coords.n_rows; ++i) {
    const double cx = scale(coords(i, 0), xmin, xmax);
    // SVG y grows downward; flip so the plot reads like a standard scatter.
    const double cy = 1000.0 - scale(coords(i, 1), ymin, ymax);
    out += "<circle cx=\"" + io::fmt_double(cx) + "\" cy=\"" + io::fmt_double(cy) +
           "\" r=\"4\" fill=\"" + color_of(categories[i]) + "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

inline void emit_scatter_svg(const DenseMatrix& coords,
                             const std::vector<std::string>& categories,
                             const std::filesystem::path& path) {
  io::atomic_write(path, scatter_svg(coords, categories));
}

}  // namespace scmine::svg
