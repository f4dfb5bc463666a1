#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ekspf {

/// Monte Carlo RMSE over runs, per time point:
///   rmse_i = sqrt( (1 / n_runs) * sum_runs sum_{c in components} err_c(i)² / |components| ).
inline Eigen::VectorXd rmse_over_runs(const std::vector<Eigen::MatrixXd>& estimates,
                                      const Eigen::MatrixXd& truth,
                                      const std::vector<Eigen::Index>& components) {
    if (estimates.empty()) throw std::invalid_argument("rmse_over_runs: need at least one run");
    if (components.empty()) throw std::invalid_argument("rmse_over_runs: need at least one component");
    for (const Eigen::Index c : components)
        if (c < 0 || c >= truth.rows())
            throw std::invalid_argument("rmse_over_runs: component index out of range");
    for (const auto& run : estimates)
        if (run.rows() != truth.rows() || run.cols() != truth.cols())
            throw std::invalid_argument("rmse_over_runs: estimate shape does not match truth");

    const auto n_runs = static_cast<double>(estimates.size());
    const auto n_comp = static_cast<double>(components.size());
    Eigen::VectorXd mse = Eigen::VectorXd::Zero(truth.cols());
    for (const auto& run : estimates)
        for (const Eigen::Index c : components)
            mse += (run.row(c) - truth.row(c)).array().square().matrix().transpose();
    return (mse / (n_runs * n_comp)).cwiseSqrt();
}

/// First time from which the series stays strictly below the threshold
/// through the end; empty when it never settles.
inline std::optional<double> convergence_time(const Eigen::VectorXd& times,
                                              const Eigen::VectorXd& series, double threshold) {
    if (times.size() != series.size())
        throw std::invalid_argument("convergence_time: times and series must align");
    std::optional<double> settled;
    for (Eigen::Index i = 0; i < series.size(); ++i) {
        if (series[i] < threshold) {
            if (!settled) settled = times[i];
        } else {
            settled.reset();
        }
    }
    return settled;
}

}  // namespace ekspf
