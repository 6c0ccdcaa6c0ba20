#pragma once

#include <string>
#include <vector>

namespace stt::cli {

// Deterministic SVG emission: identical inputs give byte-identical files.

struct Series {
    std::string label;
    std::vector<double> xs;
    std::vector<double> ys;
};

void write_line_chart(const std::string& path, const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);

struct BarGroup {
    std::string label;                // e.g. task name
    std::vector<double> values;       // one per bar series
};

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& bar_labels, const std::vector<BarGroup>& groups);

} // namespace stt::cli
