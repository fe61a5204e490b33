#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "errors.hpp"

namespace cascade {

/// Column-named numeric table. Units live in the column names (S_ueV, t_ps).
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column_index(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return i;
        throw DataError("missing column '" + std::string(name) + "'");
    }

    bool has_column(std::string_view name) const {
        for (const auto& c : columns)
            if (c == name) return true;
        return false;
    }

    std::vector<double> column(std::string_view name) const {
        const std::size_t j = column_index(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[j]);
        return out;
    }

    bool operator==(const Table& o) const {
        if (columns != o.columns || rows.size() != o.rows.size()) return false;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != o.rows[i].size()) return false;
            for (std::size_t j = 0; j < rows[i].size(); ++j) {
                const double a = rows[i][j], b = o.rows[i][j];
                if (!(a == b || (std::isnan(a) && std::isnan(b)))) return false;
            }
        }
        return true;
    }
};

/// Shortest decimal form that parses back to the identical double.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{}", v);
}

/// One header row, comma separated, '.' decimals, LF line endings.
inline void write_csv(std::ostream& os, const Table& t) {
    for (std::size_t j = 0; j < t.columns.size(); ++j) os << (j ? "," : "") << t.columns[j];
    os << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) os << (j ? "," : "") << format_number(row[j]);
        os << '\n';
    }
}

inline std::string to_csv(const Table& t) {
    std::ostringstream os;
    write_csv(os, t);
    return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_cell(const std::string& raw, std::size_t row, const std::string& column) {
    const std::string s = trim(raw);
    if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw DataError(fmt::format("row {}, column '{}': cannot parse '{}' as a number", row, column, s));
}

} // namespace detail

/// Parses a CSV written by write_csv (or by hand: blank lines and lines
/// starting with '#' are ignored). Row numbers in errors count data rows from 1.
inline Table read_csv(std::istream& is) {
    Table t;
    std::string line;
    bool have_header = false;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty() || line.front() == '#') continue;
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            for (auto& c : cells) t.columns.push_back(detail::trim(c));
            have_header = true;
            continue;
        }
        ++row;
        if (cells.size() != t.columns.size())
            throw DataError(fmt::format("row {}: expected {} columns, found {}", row, t.columns.size(),
                                        cells.size()));
        std::vector<double> values;
        values.reserve(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j)
            values.push_back(detail::parse_cell(cells[j], row, t.columns[j]));
        t.rows.push_back(std::move(values));
    }
    if (!have_header) throw DataError("input has no header row");
    return t;
}

inline Table read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_csv(in);
}

/// 64-bit FNV-1a, used for input/output fingerprints in run manifests.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_hex(std::string_view bytes) { return fmt::format("{:016x}", fnv1a64(bytes)); }

} // namespace cascade
