#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stt::cli {

struct CsvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Minimal CSV table: a header row plus string cells. Numbers are written
// with 12 significant digits so identical runs produce identical bytes.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // -1 when absent
    void write(const std::string& path) const;
    static CsvTable read(const std::string& path); // throws CsvError on malformed input
};

std::string csv_num(double v);

} // namespace stt::cli
