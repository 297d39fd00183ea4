#pragma once

#include <string>
#include <vector>

namespace rlab {

// Standalone SVG plots written directly, no plotting dependency.

struct BarGroup {
    std::string label;              // e.g. "L0/H1 (m=1/16)"
    double value = 0.0;
};

// Vertical bar chart with a y axis; bars labeled along the x axis.
std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                          const std::vector<BarGroup>& bars);

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::string label;
};

std::string svg_scatter(const std::string& title, const std::string& x_label,
                        const std::string& y_label, const std::vector<ScatterPoint>& points);

} // namespace rlab
