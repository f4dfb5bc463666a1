#pragma once

#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>

#include <Eigen/Dense>

#include "ekspf/csv.hpp"
#include "ekspf/random.hpp"

namespace ekspf {

/// Uniform time grid t_i = t0 + i * dt, i = 0..n_steps.
struct TimeGrid {
    double t0 = 0.0;
    double dt = 0.0;
    std::size_t n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double t0_, double dt_, std::size_t n_steps_) : t0(t0_), dt(dt_), n_steps(n_steps_) {
        if (!(dt > 0.0)) throw std::invalid_argument("TimeGrid: dt must be positive");
        if (n_steps < 1) throw std::invalid_argument("TimeGrid: n_steps must be at least 1");
    }

    double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
    std::size_t n_points() const { return n_steps + 1; }
    double horizon() const { return time(n_steps); }
};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Cumulative counting observations on a grid: counts(l, i) is the number of
/// channel-l events in (t0, t_i]. Column 0 is identically zero.
struct CountingPath {
    TimeGrid grid;
    CountMatrix counts;

    Eigen::Index n_channels() const { return counts.rows(); }
};

/// Simulate a conditionally Poisson counting path given the per-step intensity.
///
/// intensity_path is n_y x n_steps; column i - 1 holds the rates on (t_{i-1}, t_i].
/// Each channel runs its own arrival recursion on an independent sub-stream:
/// the next arrival after an event at time s is s - log(u) / rate, with the
/// rate taken from the step being scanned. A zero rate defers the draw; the
/// pending exponential resumes from the left edge of the first positive-rate
/// step. Arrivals already scheduled still fire inside zero-rate intervals.
inline CountingPath simulate_counting_path(const RandomSource& source,
                                           const Eigen::MatrixXd& intensity_path,
                                           const TimeGrid& grid) {
    if (intensity_path.cols() != static_cast<Eigen::Index>(grid.n_steps))
        throw std::invalid_argument("simulate_counting_path: intensity_path must have n_steps columns");
    if (!intensity_path.allFinite() || (intensity_path.array() < 0.0).any())
        throw std::invalid_argument("simulate_counting_path: rates must be finite and non-negative");

    const Eigen::Index n_y = intensity_path.rows();
    CountingPath path;
    path.grid = grid;
    path.counts = CountMatrix::Zero(n_y, static_cast<Eigen::Index>(grid.n_points()));

    for (Eigen::Index l = 0; l < n_y; ++l) {
        auto rng = source.substream(static_cast<std::uint64_t>(l)).engine();
        std::int64_t count = 0;
        bool pending = false;  // an arrival time is scheduled
        double next_arrival = 0.0;

        const double first_rate = intensity_path(l, 0);
        if (first_rate > 0.0) {
            next_arrival = grid.t0 - std::log(uniform_open01(rng)) / first_rate;
            pending = true;
        }
        for (std::size_t i = 1; i <= grid.n_steps; ++i) {
            const double rate = intensity_path(l, static_cast<Eigen::Index>(i - 1));
            const double t_i = grid.time(i);
            if (!pending && rate > 0.0) {
                next_arrival = grid.time(i - 1) - std::log(uniform_open01(rng)) / rate;
                pending = true;
            }
            while (pending && next_arrival <= t_i) {
                ++count;
                if (rate > 0.0) {
                    next_arrival += -std::log(uniform_open01(rng)) / rate;
                } else {
                    pending = false;
                }
            }
            path.counts(l, static_cast<Eigen::Index>(i)) = count;
        }
    }
    return path;
}

/// Per-step increments Delta Y_i = Y(t_{i+1}) - Y(t_i), shape n_y x n_steps.
inline CountMatrix counting_increments(const CountingPath& path) {
    if (path.counts.cols() != static_cast<Eigen::Index>(path.grid.n_points()))
        throw std::invalid_argument("counting_increments: counts shape does not match grid");
    const Eigen::Index n_steps = path.counts.cols() - 1;
    return path.counts.rightCols(n_steps) - path.counts.leftCols(n_steps);
}

/// CSV form: header "t,ch0,ch1,...", one row per grid point, cumulative counts.
inline void write_csv(const CountingPath& path, std::ostream& os) {
    os << "t";
    for (Eigen::Index l = 0; l < path.counts.rows(); ++l) os << ",ch" << l;
    os << "\n";
    for (std::size_t i = 0; i < path.grid.n_points(); ++i) {
        os << csv::format(path.grid.time(i));
        for (Eigen::Index l = 0; l < path.counts.rows(); ++l)
            os << "," << path.counts(l, static_cast<Eigen::Index>(i));
        os << "\n";
    }
}

}  // namespace ekspf
