#pragma once

#include <string>
#include <vector>

namespace dstf::cli {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> values;
};

// Line chart over a shared x axis of `x_labels` (first and last are printed).
// A flat series gets a symmetric y range so the line sits mid-plot.
std::string render_svg(const std::string& title, const std::vector<std::string>& x_labels,
                       const std::vector<Series>& series, int width = 960, int height = 360);

}  // namespace dstf::cli
