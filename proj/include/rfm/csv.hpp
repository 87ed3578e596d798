#pragma once

// Plain numeric CSV: one point per row, no header.

#include "rfm/core.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace rfm {

inline std::string format_double(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Writes the columns of `points` as rows.
inline void write_points_csv(const std::string& path, const Mat& points)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    std::string line;
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        line.clear();
        for (Eigen::Index j = 0; j < points.rows(); ++j) {
            if (j) line += ',';
            line += format_double(points(j, i));
        }
        line += '\n';
        out << line;
    }
    if (!out) throw Error("write to '" + path + "' failed");
}

/// Reads rows into columns of a d x n matrix. Blank lines are skipped; every
/// row must have the same number of fields. `dim` < 0 accepts any width.
inline Mat read_points_csv(const std::string& path, int dim = -1)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(field, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || field.find_first_not_of(" \t", used) != std::string::npos) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number: '" + field + "'");
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
        }
        rows.push_back(std::move(row));
    }
    const int d = rows.empty() ? std::max(dim, 0) : static_cast<int>(rows.front().size());
    if (dim >= 0 && d != dim) {
        throw ConfigError(path + ": expected " + std::to_string(dim) + " columns, found " + std::to_string(d));
    }
    Mat out(d, static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < d; ++j) out(j, static_cast<Eigen::Index>(i)) = rows[i][static_cast<std::size_t>(j)];
    return out;
}

}  // namespace rfm
