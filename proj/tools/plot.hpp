#pragma once

#include <string>
#include <utility>
#include <vector>

#include "edof/grid.hpp"
#include "edof/image.hpp"

namespace edof::plot
{

using Series = std::vector<std::pair<double, double>>;

// Axis box, light grid at tenths, one coloured polyline per series. Limits
// come from the data; non-finite points are skipped.
Image line_plot(const std::vector<Series> &series, std::size_t width = 640, std::size_t height = 400);

// Grid normalized to its min/max and mapped through a blue-yellow ramp.
Image heatmap(const RealGrid &grid);

} // namespace edof::plot
