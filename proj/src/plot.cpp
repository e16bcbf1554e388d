#include "anonsched/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "anonsched/core.hpp"
#include "anonsched/csv.hpp"

namespace anonsched {

namespace {

double to_number(const std::string& s) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw InputError("plot: non-numeric cell '" + s + "'");
    }
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

std::string render_svg(const PlotSpec& spec) {
    csv::Table table = csv::read_table(spec.csv_path);
    int xi = table.column(spec.x_column);
    int yi = table.column(spec.y_column);
    int gi = spec.group_column.empty() ? -1 : table.column(spec.group_column);

    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (const auto& row : table.rows) {
        std::string group = gi < 0 ? spec.y_column : row[static_cast<std::size_t>(gi)];
        series[group].emplace_back(to_number(row[static_cast<std::size_t>(xi)]),
                                   to_number(row[static_cast<std::size_t>(yi)]));
    }
    if (series.empty()) throw InputError("plot: no data rows");

    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool first = true;
    for (auto& [name, points] : series) {
        std::sort(points.begin(), points.end());
        for (const auto& [x, y] : points) {
            if (first) {
                xmin = xmax = x;
                ymin = ymax = y;
                first = false;
            }
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;

    const double margin = 56;
    const double pw = spec.width - 2 * margin;
    const double ph = spec.height - 2 * margin;
    auto px = [&](double x) { return margin + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return spec.height - margin - (y - ymin) / (ymax - ymin) * ph; };

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
        << spec.height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << spec.height - margin << "\" x2=\""
        << spec.width - margin << "\" y2=\"" << spec.height - margin
        << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
        << spec.height - margin << "\" stroke=\"black\"/>\n";

    svg << "<text x=\"" << spec.width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">"
        << (spec.title.empty() ? spec.y_column + " vs " + spec.x_column : spec.title)
        << "</text>\n";
    svg << "<text x=\"" << spec.width / 2 << "\" y=\"" << spec.height - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << spec.x_column << " [" << csv::fmt_double(xmin) << " .. " << csv::fmt_double(xmax)
        << "]</text>\n";
    svg << "<text x=\"16\" y=\"" << spec.height / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 16 " << spec.height / 2 << ")\">" << spec.y_column << " ["
        << csv::fmt_double(ymin) << " .. " << csv::fmt_double(ymax) << "]</text>\n";

    int color = 0;
    double legend_y = margin;
    for (const auto& [name, points] : series) {
        const char* stroke = kPalette[color % 8];
        svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
        for (const auto& [x, y] : points) {
            svg << csv::fmt_double(px(x)) << ',' << csv::fmt_double(py(y)) << ' ';
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << spec.width - margin + 4 << "\" y=\"" << legend_y
            << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << stroke << "\">" << name
            << "</text>\n";
        legend_y += 14;
        ++color;
    }
    svg << "</svg>\n";
    return svg.str();
}

void plot_to_file(const PlotSpec& spec, const std::string& out_path) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw InputError("plot: cannot write '" + out_path + "'");
    out << render_svg(spec);
}

}  // namespace anonsched
