#pragma once

#include <cstdio>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tsm/error.hpp"

namespace tsm::csv {

// Fixed-point formatting used by every CSV artifact so that files diff cleanly.
inline std::string fixed(double value, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

// Round-trip exact formatting for values that are read back (model weights).
inline std::string exact(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

inline std::vector<std::string> split(std::string_view line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double to_double(const std::string& field, std::size_t line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw IoError("line " + std::to_string(line_no) + ": not a number: '" + field + "'");
    }
}

// Reads a numeric table, checking the header against `expected_header`.
inline std::vector<std::vector<double>> read_numeric(std::istream& in,
                                                     std::string_view expected_header) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header) {
        throw IoError("unexpected CSV header '" + line + "', expected '" +
                      std::string(expected_header) + "'");
    }
    const auto columns = split(expected_header).size();
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != columns) {
            throw IoError("line " + std::to_string(line_no) + ": expected " +
                          std::to_string(columns) + " fields");
        }
        std::vector<double> row;
        row.reserve(columns);
        for (const auto& f : fields) row.push_back(to_double(f, line_no));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace tsm::csv
