#pragma once

#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

#include "ekspf/counting.hpp"
#include "ekspf/duffing.hpp"
#include "ekspf/filter.hpp"
#include "ekspf/random.hpp"

namespace ekspf {

struct ControlTrajectory {
    Eigen::VectorXd times;         // n_steps + 1
    Eigen::VectorXd control;       // applied control per step, n_steps
    Eigen::MatrixXd controlled;    // 2 x (n_steps + 1) plant states
    Eigen::MatrixXd uncontrolled;  // 2 x (n_steps + 1) reference twin, same noise
    Eigen::VectorXd cost_min;      // per-step empirical minimum of the running cost
};

namespace detail {

inline Eigen::Vector2d duffing_em_step(const Eigen::Vector2d& x, double u, double t_next, double dt,
                                       double noise, const DuffingControlProblem& problem) {
    Eigen::Vector2d next = x + duffing_drift(x, u, t_next, problem) * dt;
    next[1] += problem.sigma * noise;
    return next;
}

}  // namespace detail

/// Closed-loop feedback control of the Duffing plant. The control force is
/// tracked by its own ensemble: per step it is propagated by a random walk,
/// then repeatedly corrected with a counting innovation whose target rate
/// comes from the empirical minimum of the running cost over the candidates.
/// The plant (assumed fully observed) and an uncontrolled twin advance from
/// the same Brownian increments, so their difference isolates the control.
inline ControlTrajectory run_control(const DuffingControlProblem& problem, const FilterConfig& config,
                                     double horizon, const RandomSource& source) {
    problem.validate();
    if (!(config.dt > 0.0)) throw std::invalid_argument("run_control: config.dt must be positive");
    if (!(horizon > config.dt)) throw std::invalid_argument("run_control: horizon must exceed dt");
    if (config.n_e < 2) throw std::invalid_argument("run_control: need at least 2 ensemble members");

    const auto n_steps = static_cast<std::size_t>(std::llround(horizon / config.dt));
    const TimeGrid grid(0.0, config.dt, n_steps);
    const double dt = grid.dt;

    // Control ensemble: scalar state, Gaussian start.
    FilterConfig control_config = config;
    control_config.initial_mean = Eigen::VectorXd::Zero(1);
    control_config.initial_cov_diag =
        Eigen::VectorXd::Constant(1, problem.control_init_std * problem.control_init_std);
    Ensemble controls = init_ensemble(control_config, source.substream(streams::kInitialEnsemble));

    const RandomSource walk_noise = source.substream(streams::kControlWalk);
    const RandomSource plant_noise = source.substream(streams::kProcessNoise);
    const RandomSource count_noise = source.substream(streams::kVirtualCounts);

    ControlTrajectory traj;
    traj.times.resize(static_cast<Eigen::Index>(grid.n_points()));
    traj.control.setZero(static_cast<Eigen::Index>(n_steps));
    traj.controlled.setZero(2, static_cast<Eigen::Index>(grid.n_points()));
    traj.uncontrolled.setZero(2, static_cast<Eigen::Index>(grid.n_points()));
    traj.cost_min.setZero(static_cast<Eigen::Index>(n_steps));
    traj.times[0] = grid.t0;

    Eigen::Vector2d plant = Eigen::Vector2d::Zero();
    Eigen::Vector2d twin = Eigen::Vector2d::Zero();

    for (std::size_t i = 0; i < n_steps; ++i) {
        const double t_next = grid.time(i + 1);
        const double plant_db =
            brownian_increments(plant_noise.substream(i), 1, dt)[0];

        // (a) random-walk prediction of the control candidates
        const Eigen::VectorXd walk_db =
            brownian_increments(walk_noise.substream(i), controls.size(), dt);
        controls.particles.row(0) += problem.control_walk_sigma * walk_db.transpose();
        controls.t = t_next;

        auto count_rng = count_noise.substream(i).engine();
        double delta_y = 0.0;
        Eigen::MatrixXd lambda(1, controls.size());
        for (int it = 0; it < problem.inner_iterations; ++it) {
            // (b) one-step look-ahead of the plant under each candidate
            Eigen::VectorXd cost(controls.size());
            for (Eigen::Index j = 0; j < controls.size(); ++j) {
                const double u = controls.particles(0, j);
                const Eigen::Vector2d ahead =
                    detail::duffing_em_step(plant, u, t_next, dt, plant_db, problem);
                cost[j] = performance_index(ahead, u, problem.weight_r, problem.weight_s);
            }
            if (!cost.allFinite())
                throw std::runtime_error("run_control: control loop diverged (non-finite cost) at step " +
                                         std::to_string(i));
            // (c) candidate intensities and the empirical-minimum target rate
            lambda.row(0) = problem.alpha_control * cost.transpose();
            const double cost_floor = cost.minCoeff();
            if (it == 0) traj.cost_min[static_cast<Eigen::Index>(i)] = cost_floor;
            // (d) virtual counting increment from the target rate
            if (problem.redraw_counts_each_iteration || it == 0) {
                const double rate = problem.alpha_control * cost_floor * dt;
                // Counts beyond 2^53 are no longer exact in double arithmetic, so a
                // rate that large means the loop has numerically diverged.
                if (!(rate <= 9007199254740992.0))
                    throw std::runtime_error("run_control: control loop diverged (count rate overflow) at step " +
                                             std::to_string(i));
                delta_y = rate > 0.0
                              ? static_cast<double>(std::poisson_distribution<long>(rate)(count_rng))
                              : 0.0;
            }
            // (e) gain and innovation update of the control ensemble
            const Gain gain = compute_gain(controls, lambda);
            controls = update(controls, gain, Eigen::VectorXd::Constant(1, delta_y), lambda, dt,
                              config.include_dt_in_innovation);
        }

        // (g) apply the ensemble-mean control; twin advances force-free
        const double u_applied = estimate(controls)[0];
        plant = detail::duffing_em_step(plant, u_applied, t_next, dt, plant_db, problem);
        twin = detail::duffing_em_step(twin, 0.0, t_next, dt, plant_db, problem);
        if (!plant.allFinite() || !controls.particles.allFinite())
            throw std::runtime_error("run_control: non-finite state at step " + std::to_string(i));

        const auto col = static_cast<Eigen::Index>(i);
        traj.control[col] = u_applied;
        traj.times[col + 1] = t_next;
        traj.controlled.col(col + 1) = plant;
        traj.uncontrolled.col(col + 1) = twin;
    }
    return traj;
}

}  // namespace ekspf
