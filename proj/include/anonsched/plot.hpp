#pragma once

#include <string>

// Convenience rendering of experiment CSVs as SVG line charts. The CSVs are
// the primary output; this is only for quick visual inspection.

namespace anonsched {

struct PlotSpec {
    std::string csv_path;
    std::string x_column;
    std::string y_column;
    std::string group_column;  // optional: one polyline per distinct value
    std::string title;
    int width = 900;
    int height = 540;
};

std::string render_svg(const PlotSpec& spec);

void plot_to_file(const PlotSpec& spec, const std::string& out_path);

}  // namespace anonsched
