#pragma once

#include <string>
#include <vector>

namespace strata {

struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct PlotLabels {
    std::string title;
    std::string x_axis;
    std::string y_axis;
};

/// Polyline per series with point markers and a legend. Output depends only
/// on the inputs, so equal data gives equal bytes.
std::string svg_line_plot(const PlotLabels& labels, const std::vector<Series>& series);

/// Points coloured by group id.
std::string svg_scatter_plot(const PlotLabels& labels, const std::vector<double>& x, const std::vector<double>& y,
                             const std::vector<int>& group);

} // namespace strata
