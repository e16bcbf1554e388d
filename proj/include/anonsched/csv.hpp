#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "anonsched/core.hpp"

// Minimal CSV helpers. Output formatting is centralized here so identical
// values always serialize to identical bytes.

namespace anonsched::csv {

inline std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

// Splits one line on commas. Our own outputs never quote fields.
inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
        out.back().pop_back();
    }
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        throw InputError("csv: no column named '" + name + "'");
    }
};

Table read_table(const std::string& path);

}  // namespace anonsched::csv
