#include "stt/metrics.hpp"

#include <fstream>
#include <sstream>

namespace stt::cli {

std::string csv_num(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

int CsvTable::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

void CsvTable::write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw CsvError("csv: cannot write " + path);
    for (size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << "\n";
    }
}

CsvTable CsvTable::read(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw CsvError("csv: cannot open " + path);
    CsvTable t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ss(s);
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!s.empty() && s.back() == ',') cells.push_back("");
        return cells;
    };
    if (!std::getline(is, line) || line.empty()) throw CsvError("csv: " + path + " is empty or has no header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split(line);
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size())
            throw CsvError("csv: " + path + ": row has " + std::to_string(cells.size()) +
                           " cells, header has " + std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    return t;
}

} // namespace stt::cli
