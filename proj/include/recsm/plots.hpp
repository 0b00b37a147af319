#pragma once

#include <string>
#include <vector>

#include "recsm/tensor.hpp"

namespace recsm {

struct PlotSeries {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
};

// Simple line chart as a standalone SVG. Axes are scaled to the data range;
// the output is a pure function of the inputs.
void write_svg_curves(const std::string& path, const std::vector<PlotSeries>& series, const std::string& title,
                      const std::string& x_label, const std::string& y_label);

// [H,W] map rendered with a fixed blue-white-red colormap over [vmin, vmax].
void write_heatmap_png(const std::string& path, const Tensor& values, double vmin, double vmax);

// Error heatmap convenience: |pred - gt| where mask > 0, black elsewhere.
void write_error_heatmap_png(const std::string& path, const Tensor& pred, const Tensor& gt, const Tensor& mask,
                             double vmax = 5.0);

}  // namespace recsm
