#pragma once

#include <algorithm>
#include <vector>

#include "gazekit/gesture/raster.hpp"

namespace gazekit::gesture {

/// Cellwise mean without normalization.
inline GestureRaster heatmap_mean(const std::vector<GestureRaster>& rasters) {
  require(!rasters.empty(), ErrorKind::Parameter, "heat map needs at least one raster");
  GestureRaster mean;
  for (const auto& r : rasters)
    for (std::size_t i = 0; i < mean.cells.size(); ++i) mean.cells[i] += r.cells[i];
  for (double& v : mean.cells) v /= static_cast<double>(rasters.size());
  return mean;
}

/// Cellwise mean of the rasters, then divided by its maximum so the peak is 1.
inline GestureRaster heatmap_aggregate(const std::vector<GestureRaster>& rasters) {
  GestureRaster mean = heatmap_mean(rasters);
  const double mx = *std::max_element(mean.cells.begin(), mean.cells.end());
  if (mx > 0.0)
    for (double& v : mean.cells) v /= mx;
  return mean;
}

/// Share of nonzero cells whose heat exceeds `level`.
inline double high_heat_fraction(const GestureRaster& heat, double level = 0.5) {
  std::size_t nonzero = 0, high = 0;
  for (double v : heat.cells) {
    if (v > 0.0) ++nonzero;
    if (v > level) ++high;
  }
  return nonzero ? static_cast<double>(high) / static_cast<double>(nonzero) : 0.0;
}

}  // namespace gazekit::gesture
