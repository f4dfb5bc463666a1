#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ekspf/counting.hpp"
#include "ekspf/filter.hpp"
#include "ekspf/models.hpp"
#include "ekspf/random.hpp"

namespace ekspf {

/// Particle cloud with normalized log-weights: sum_j exp(log_weights_j) = 1.
struct WeightedEnsemble {
    double t = 0.0;
    Eigen::MatrixXd particles;    // n_x x n_e
    Eigen::VectorXd log_weights;  // n_e

    Eigen::Index size() const { return particles.cols(); }

    // Scalar std::exp per entry: Eigen's vectorized exp clamps its argument,
    // turning exp(-inf) into a denormal instead of the exact zero a fully
    // vanished member must report.
    Eigen::VectorXd weights() const {
        return log_weights.unaryExpr([](double lw) { return std::exp(lw); });
    }

    Eigen::VectorXd weighted_mean() const { return particles * weights(); }

    double effective_sample_size() const { return 1.0 / weights().squaredNorm(); }
};

namespace detail {

/// Normalize log-weights in place via log-sum-exp; all-vanished mass is a
/// filter failure, not a silent reset.
inline void normalize_log_weights(Eigen::VectorXd& log_weights) {
    const double max_lw = log_weights.maxCoeff();
    if (!std::isfinite(max_lw))
        throw std::runtime_error("particle filter degeneracy: all weights vanished");
    const double log_total = max_lw + std::log((log_weights.array() - max_lw).exp().sum());
    log_weights.array() -= log_total;
}

/// Systematic resampling: one uniform offset, n_e equally spaced pointers.
inline Eigen::MatrixXd systematic_resample(const Eigen::MatrixXd& particles,
                                           const Eigen::VectorXd& weights,
                                           const RandomSource& source) {
    const Eigen::Index n_e = particles.cols();
    auto rng = source.engine();
    const double offset = uniform_open01(rng) / static_cast<double>(n_e);
    Eigen::MatrixXd out(particles.rows(), n_e);
    double cumulative = weights[0];
    Eigen::Index j = 0;
    for (Eigen::Index k = 0; k < n_e; ++k) {
        const double pointer = offset + static_cast<double>(k) / static_cast<double>(n_e);
        while (pointer > cumulative && j + 1 < n_e) cumulative += weights[++j];
        out.col(k) = particles.col(j);
    }
    return out;
}

}  // namespace detail

/// Weight update for counting observations over one step, followed by
/// systematic resampling when ESS / n_e drops below ess_threshold.
/// Log-weight increment per member: sum_l [ dY_l log(lambda_l) - lambda_l dt ],
/// where the log term is skipped for dY_l = 0 and forces weight 0 when an
/// observed channel has zero intensity at the member.
inline WeightedEnsemble sir_poisson_step(const WeightedEnsemble& we, const Eigen::VectorXd& delta_y,
                                         const Eigen::MatrixXd& intensities, double dt,
                                         double ess_threshold, const RandomSource& source) {
    if (intensities.cols() != we.size())
        throw std::invalid_argument("sir_poisson_step: intensities must have one column per member");
    if (delta_y.size() != intensities.rows())
        throw std::invalid_argument("sir_poisson_step: delta_y size must match intensity channels");
    if ((delta_y.array() < 0.0).any())
        throw std::invalid_argument("sir_poisson_step: counting increments must be non-negative");
    if (!(dt > 0.0)) throw std::invalid_argument("sir_poisson_step: dt must be positive");

    WeightedEnsemble out = we;
    for (Eigen::Index j = 0; j < we.size(); ++j) {
        double increment = 0.0;
        for (Eigen::Index l = 0; l < delta_y.size(); ++l) {
            const double lambda = intensities(l, j);
            increment -= lambda * dt;
            if (delta_y[l] > 0.0) {
                if (lambda > 0.0) {
                    increment += delta_y[l] * std::log(lambda);
                } else {
                    increment = -std::numeric_limits<double>::infinity();
                    break;
                }
            }
        }
        out.log_weights[j] += increment;
    }
    detail::normalize_log_weights(out.log_weights);

    if (out.effective_sample_size() < ess_threshold * static_cast<double>(we.size())) {
        out.particles = detail::systematic_resample(out.particles, out.weights(), source);
        out.log_weights.setConstant(-std::log(static_cast<double>(we.size())));
    }
    return out;
}

/// Bootstrap particle filter against counting measurements; shares the
/// prediction step and initialization with the ensemble filter.
inline FilterTrajectory sir_run(const FilterConfig& config, const CountingPath& measurements,
                                const ProcessModel& model, const IntensityModel& intensity,
                                double ess_threshold = 0.5) {
    const TimeGrid& grid = measurements.grid;
    detail::check_filter_inputs(config, grid, model.n_x);
    if (measurements.counts.rows() != intensity.n_y)
        throw std::invalid_argument("sir_run: channel count does not match intensity model");

    const RandomSource root{config.seed, 0};
    Ensemble ens = init_ensemble(config, root.substream(streams::kInitialEnsemble));
    ens.t = grid.t0;
    WeightedEnsemble we;
    we.t = ens.t;
    we.particles = ens.particles;
    we.log_weights.setConstant(config.n_e, -std::log(static_cast<double>(config.n_e)));

    const RandomSource process_noise = root.substream(streams::kProcessNoise);
    const RandomSource resampling = root.substream(streams::kResampling);
    const CountMatrix increments = counting_increments(measurements);

    FilterTrajectory traj;
    traj.times.resize(static_cast<Eigen::Index>(grid.n_points()));
    traj.estimates.resize(model.n_x, static_cast<Eigen::Index>(grid.n_points()));
    traj.times[0] = grid.t0;
    traj.estimates.col(0) = we.weighted_mean();

    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        try {
            ens.t = we.t;
            ens.particles = we.particles;
            ens = predict(ens, model, grid.dt, process_noise.substream(i));
            we.t = ens.t;
            we.particles = ens.particles;
            const Eigen::MatrixXd lambda = evaluate_intensities(ens, intensity);
            const Eigen::VectorXd delta_y =
                increments.col(static_cast<Eigen::Index>(i)).cast<double>();
            we = sir_poisson_step(we, delta_y, lambda, grid.dt, ess_threshold,
                                  resampling.substream(i));
            traj.times[static_cast<Eigen::Index>(i) + 1] = grid.time(i + 1);
            traj.estimates.col(static_cast<Eigen::Index>(i) + 1) = we.weighted_mean();
        } catch (const std::exception& e) {
            detail::rethrow_at_step(i, e);
        }
    }
    return traj;
}

}  // namespace ekspf
