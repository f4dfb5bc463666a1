#pragma once

#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ekspf::csv {

/// Shortest text form that round-trips a double exactly.
inline std::string format(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Time series table: header "t,<name0>,...", values is n_vars x n_points,
/// column i of values becomes row i of the table.
inline void write_timeseries(std::ostream& os, const std::vector<std::string>& names,
                             const Eigen::VectorXd& times, const Eigen::MatrixXd& values) {
    if (values.rows() != static_cast<Eigen::Index>(names.size()))
        throw std::invalid_argument("write_timeseries: one name per value row required");
    if (values.cols() != times.size())
        throw std::invalid_argument("write_timeseries: one value column per time point required");
    os << "t";
    for (const auto& n : names) os << "," << n;
    os << "\n";
    for (Eigen::Index i = 0; i < times.size(); ++i) {
        os << format(times[i]);
        for (Eigen::Index r = 0; r < values.rows(); ++r) os << "," << format(values(r, i));
        os << "\n";
    }
}

inline std::vector<std::string> numbered_names(const std::string& prefix, Eigen::Index n) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
    return names;
}

}  // namespace ekspf::csv
