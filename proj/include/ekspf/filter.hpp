#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ekspf/counting.hpp"
#include "ekspf/models.hpp"
#include "ekspf/random.hpp"

namespace ekspf {

/// Equally weighted particle cloud at time t; one column per member.
struct Ensemble {
    double t = 0.0;
    Eigen::MatrixXd particles;  // n_x x n_e

    Eigen::Index state_dim() const { return particles.rows(); }
    Eigen::Index size() const { return particles.cols(); }
};

/// Innovation gain, one column per counting channel. Channels whose ensemble
/// intensity mass vanished carry a zero column and are listed as degenerate.
struct Gain {
    Eigen::MatrixXd g;  // n_x x n_y
    std::vector<Eigen::Index> degenerate_channels;
};

struct FilterConfig {
    int n_e = 200;
    double dt = 0.0;
    bool include_dt_in_innovation = true;  // innovation dY - lambda*dt; false drops the dt factor
    Eigen::VectorXd initial_mean;
    Eigen::VectorXd initial_cov_diag;
    std::uint64_t seed = 0;
};

/// Filter output: estimates(., 0) is the initial-ensemble mean, estimates(., i)
/// the posterior mean after assimilating step i. Gain norms and mean
/// innovations are kept as per-step diagnostics.
struct FilterTrajectory {
    Eigen::VectorXd times;              // n_steps + 1
    Eigen::MatrixXd estimates;          // n_x x (n_steps + 1)
    Eigen::VectorXd gain_norms;         // n_steps
    Eigen::MatrixXd innovation_means;   // n_y x n_steps
    std::int64_t degenerate_channel_events = 0;
};

/// Gaussian initial cloud: member j has independent components
/// N(initial_mean_c, initial_cov_diag_c). Draw order is member-major.
inline Ensemble init_ensemble(const FilterConfig& config, const RandomSource& source) {
    if (config.n_e < 2) throw std::invalid_argument("init_ensemble: need at least 2 members");
    if (config.initial_mean.size() == 0)
        throw std::invalid_argument("init_ensemble: initial_mean is empty");
    if (config.initial_cov_diag.size() != config.initial_mean.size())
        throw std::invalid_argument("init_ensemble: initial_cov_diag size must match initial_mean");
    if (!config.initial_cov_diag.allFinite() || (config.initial_cov_diag.array() < 0.0).any())
        throw std::invalid_argument("init_ensemble: initial_cov_diag must be finite and non-negative");

    const Eigen::Index n_x = config.initial_mean.size();
    const Eigen::VectorXd std_dev = config.initial_cov_diag.cwiseSqrt();
    Ensemble ens;
    ens.particles.resize(n_x, config.n_e);
    auto rng = source.engine();
    for (int j = 0; j < config.n_e; ++j)
        for (Eigen::Index c = 0; c < n_x; ++c)
            ens.particles(c, j) = config.initial_mean[c] + std_dev[c] * standard_normal(rng);
    return ens;
}

/// One Euler-Maruyama step for every member:
/// X(j) <- X(j) + drift(t + dt, X(j)) dt + diffusion(t + dt, X(j)) dB(j),
/// with dB(j) ~ N(0, dt I) drawn independently per member.
inline Ensemble predict(const Ensemble& ens, const ProcessModel& model, double dt,
                        const RandomSource& source) {
    if (!(dt > 0.0)) throw std::invalid_argument("predict: dt must be positive");
    if (ens.state_dim() != model.n_x)
        throw std::invalid_argument("predict: ensemble state dimension does not match model");

    const double t_next = ens.t + dt;
    const Eigen::MatrixXd db = brownian_increment_matrix(source, model.n_b, ens.size(), dt);
    Ensemble out;
    out.t = t_next;
    out.particles.resize(ens.state_dim(), ens.size());
    for (Eigen::Index j = 0; j < ens.size(); ++j) {
        const Eigen::VectorXd x = ens.particles.col(j);
        const Eigen::VectorXd mu = model.drift(t_next, x);
        const Eigen::MatrixXd sigma = model.diffusion(t_next, x);
        if (mu.size() != model.n_x || sigma.rows() != model.n_x || sigma.cols() != model.n_b)
            throw std::runtime_error("predict: model returned wrong drift/diffusion shape");
        out.particles.col(j) = x + mu * dt + sigma * db.col(j);
        if (!out.particles.col(j).allFinite())
            throw std::runtime_error("predict: non-finite state for member " + std::to_string(j));
    }
    return out;
}

/// Intensity of every channel at every member, n_y x n_e.
inline Eigen::MatrixXd evaluate_intensities(const Ensemble& ens, const IntensityModel& intensity) {
    Eigen::MatrixXd out(intensity.n_y, ens.size());
    for (Eigen::Index j = 0; j < ens.size(); ++j) {
        const Eigen::VectorXd rate = intensity.rate(ens.t, ens.particles.col(j));
        if (rate.size() != intensity.n_y)
            throw std::runtime_error("evaluate_intensities: rate has wrong dimension");
        if (!rate.allFinite() || (rate.array() < 0.0).any())
            throw std::runtime_error("evaluate_intensities: negative or non-finite rate for member " +
                                     std::to_string(j));
        out.col(j) = rate;
    }
    return out;
}

/// Column l is the intensity-weighted ensemble mean minus the plain mean:
/// G^l = sum_k lambda_l(X(k)) X(k) / sum_k lambda_l(X(k)) - mean_k X(k).
/// A channel with zero total intensity gets a zero column.
inline Gain compute_gain(const Ensemble& ens, const Eigen::MatrixXd& intensities) {
    if (intensities.cols() != ens.size())
        throw std::invalid_argument("compute_gain: intensities must have one column per member");
    if (!intensities.allFinite() || (intensities.array() < 0.0).any())
        throw std::invalid_argument("compute_gain: intensities must be finite and non-negative");

    const Eigen::VectorXd mean = ens.particles.rowwise().mean();
    Gain gain;
    gain.g.setZero(ens.state_dim(), intensities.rows());
    for (Eigen::Index l = 0; l < intensities.rows(); ++l) {
        const double mass = intensities.row(l).sum();
        if (mass > 0.0) {
            gain.g.col(l) = ens.particles * intensities.row(l).transpose() / mass - mean;
        } else {
            gain.degenerate_channels.push_back(l);
        }
    }
    return gain;
}

/// Innovation update for every member:
/// X(j) <- X(j) + G (delta_y - lambda(X(j)) dt), the dt factor dropped when
/// include_dt is false.
inline Ensemble update(const Ensemble& ens, const Gain& gain, const Eigen::VectorXd& delta_y,
                       const Eigen::MatrixXd& intensities, double dt, bool include_dt) {
    if (gain.g.rows() != ens.state_dim())
        throw std::invalid_argument("update: gain rows must match state dimension");
    if (delta_y.size() != gain.g.cols())
        throw std::invalid_argument("update: delta_y size must match gain columns");
    if (intensities.rows() != gain.g.cols() || intensities.cols() != ens.size())
        throw std::invalid_argument("update: intensities shape must be n_y x n_e");
    if ((delta_y.array() < 0.0).any())
        throw std::invalid_argument("update: counting increments must be non-negative");
    if (!(dt > 0.0)) throw std::invalid_argument("update: dt must be positive");

    const double scale = include_dt ? dt : 1.0;
    Ensemble out;
    out.t = ens.t;
    const Eigen::MatrixXd innovations =
        delta_y.replicate(1, ens.size()) - scale * intensities;
    out.particles = ens.particles + gain.g * innovations;
    return out;
}

/// Filter estimate: the ensemble mean.
inline Eigen::VectorXd estimate(const Ensemble& ens) {
    if (ens.size() == 0) throw std::invalid_argument("estimate: empty ensemble");
    return ens.particles.rowwise().mean();
}

namespace detail {

inline void check_filter_inputs(const FilterConfig& config, const TimeGrid& grid, int n_x) {
    if (config.initial_mean.size() != n_x)
        throw std::invalid_argument("filter: initial_mean size must match model state dimension");
    if (config.dt > 0.0 && std::abs(config.dt - grid.dt) > 1e-12 * std::max(1.0, grid.dt))
        throw std::invalid_argument("filter: config.dt does not match measurement grid");
}

[[noreturn]] inline void rethrow_at_step(std::size_t i, const std::exception& e) {
    throw std::runtime_error("filter step " + std::to_string(i) + ": " + e.what());
}

}  // namespace detail

/// Full filtering pass against observed counting increments.
/// Per step: predict, evaluate intensities, gain, innovation update, record mean.
inline FilterTrajectory run_filter_poisson(const FilterConfig& config, const CountingPath& measurements,
                                           const ProcessModel& model, const IntensityModel& intensity) {
    const TimeGrid& grid = measurements.grid;
    detail::check_filter_inputs(config, grid, model.n_x);
    if (measurements.counts.rows() != intensity.n_y)
        throw std::invalid_argument("run_filter_poisson: channel count does not match intensity model");

    const RandomSource root{config.seed, 0};
    Ensemble ens = init_ensemble(config, root.substream(streams::kInitialEnsemble));
    ens.t = grid.t0;
    const RandomSource process_noise = root.substream(streams::kProcessNoise);
    const CountMatrix increments = counting_increments(measurements);

    FilterTrajectory traj;
    traj.times.resize(static_cast<Eigen::Index>(grid.n_points()));
    traj.estimates.resize(model.n_x, static_cast<Eigen::Index>(grid.n_points()));
    traj.gain_norms.setZero(static_cast<Eigen::Index>(grid.n_steps));
    traj.innovation_means.setZero(intensity.n_y, static_cast<Eigen::Index>(grid.n_steps));
    traj.times[0] = grid.t0;
    traj.estimates.col(0) = estimate(ens);

    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        try {
            ens = predict(ens, model, grid.dt, process_noise.substream(i));
            const Eigen::MatrixXd lambda = evaluate_intensities(ens, intensity);
            const Gain gain = compute_gain(ens, lambda);
            const Eigen::VectorXd delta_y =
                increments.col(static_cast<Eigen::Index>(i)).cast<double>();
            ens = update(ens, gain, delta_y, lambda, grid.dt, config.include_dt_in_innovation);

            const auto col = static_cast<Eigen::Index>(i);
            traj.gain_norms[col] = gain.g.norm();
            const double scale = config.include_dt_in_innovation ? grid.dt : 1.0;
            traj.innovation_means.col(col) = delta_y - scale * lambda.rowwise().mean();
            traj.degenerate_channel_events +=
                static_cast<std::int64_t>(gain.degenerate_channels.size());
            traj.times[col + 1] = grid.time(i + 1);
            traj.estimates.col(col + 1) = estimate(ens);
        } catch (const std::exception& e) {
            detail::rethrow_at_step(i, e);
        }
    }
    return traj;
}

/// Turn diffusion-type measurement records into virtual counting observations:
/// channel l counts with rate alpha_l * |records(l, i)| on step i.
inline CountingPath make_virtual_measurements(const Eigen::MatrixXd& records,
                                              const Eigen::VectorXd& alpha, const TimeGrid& grid,
                                              const RandomSource& source) {
    if (records.rows() != alpha.size())
        throw std::invalid_argument("make_virtual_measurements: one alpha per record channel required");
    if (!alpha.allFinite() || (alpha.array() <= 0.0).any())
        throw std::invalid_argument("make_virtual_measurements: alpha must be positive and finite");
    if (!records.allFinite())
        throw std::invalid_argument("make_virtual_measurements: records must be finite");
    const Eigen::MatrixXd rates = (records.array().abs().colwise() * alpha.array()).matrix();
    return simulate_counting_path(source, rates, grid);
}

/// Diffusion-measurement filtering: generate the virtual counting path once,
/// then run the counting filter with the matched virtual intensity model.
inline FilterTrajectory run_filter_diffusion(const FilterConfig& config, const Eigen::MatrixXd& records,
                                             const ProcessModel& model, const MeasurementOperator& op,
                                             const Eigen::VectorXd& alpha) {
    if (records.rows() != op.n_m)
        throw std::invalid_argument("run_filter_diffusion: records rows must match measurement dimension");
    if (!(config.dt > 0.0))
        throw std::invalid_argument("run_filter_diffusion: config.dt must be positive");
    const TimeGrid grid(0.0, config.dt, static_cast<std::size_t>(records.cols()));
    const RandomSource root{config.seed, 0};
    const CountingPath counts =
        make_virtual_measurements(records, alpha, grid, root.substream(streams::kVirtualCounts));
    return run_filter_poisson(config, counts, model, virtual_intensity(alpha, op));
}

}  // namespace ekspf
