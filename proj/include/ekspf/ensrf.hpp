#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "ekspf/filter.hpp"
#include "ekspf/models.hpp"

namespace ekspf {

/// Deterministic ensemble square-root analysis (symmetric transform).
///
/// With anomalies A = X - mean, normalized predicted-observation anomalies
/// Z, and C = Zᵀ R⁻¹ Z / (n_e - 1), the update is
///   mean⁺ = mean + A (I + C)⁻¹ Zᵀ R⁻¹ (obs - z̄) / (n_e - 1)
///   A⁺    = A (I + C)^(-1/2)        (symmetric square root)
/// so the posterior sample moments match the Kalman update applied to the
/// prior sample moments. No observation perturbations are drawn.
inline Ensemble ensrf_step(const Ensemble& ens, const Eigen::VectorXd& obs,
                           const MeasurementOperator& op) {
    const Eigen::Index n_e = ens.size();
    if (n_e < 2) throw std::invalid_argument("ensrf_step: need at least 2 members");
    if (obs.size() != op.n_m) throw std::invalid_argument("ensrf_step: obs size must match operator");
    if (op.noise_std.size() != op.n_m)
        throw std::invalid_argument("ensrf_step: noise_std size must match operator");
    if (!op.noise_std.allFinite() || (op.noise_std.array() <= 0.0).any())
        throw std::runtime_error("ensrf_step: singular observation covariance");

    Eigen::MatrixXd z(op.n_m, n_e);
    for (Eigen::Index j = 0; j < n_e; ++j) z.col(j) = op.observe(ens.t, ens.particles.col(j));

    const Eigen::VectorXd x_mean = ens.particles.rowwise().mean();
    const Eigen::VectorXd z_mean = z.rowwise().mean();
    const Eigen::MatrixXd anomalies = ens.particles.colwise() - x_mean;
    // Scale observation anomalies by R^(-1/2) once; C then has unit noise.
    const Eigen::ArrayXd inv_std = op.noise_std.array().inverse();
    const Eigen::MatrixXd z_anom = ((z.colwise() - z_mean).array().colwise() * inv_std).matrix();
    const Eigen::VectorXd innovation = ((obs - z_mean).array() * inv_std).matrix();

    const double scale = 1.0 / static_cast<double>(n_e - 1);
    const Eigen::MatrixXd c = scale * z_anom.transpose() * z_anom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("ensrf_step: eigendecomposition failed");
    const Eigen::ArrayXd ev = eig.eigenvalues().array().max(0.0);

    const Eigen::MatrixXd& v = eig.eigenvectors();
    const Eigen::VectorXd rhs = scale * (z_anom.transpose() * innovation);
    const Eigen::VectorXd w_mean = v * ((v.transpose() * rhs).array() / (1.0 + ev)).matrix();
    const Eigen::VectorXd inv_sqrt = (1.0 + ev).rsqrt();
    const Eigen::MatrixXd transform = v * inv_sqrt.asDiagonal() * v.transpose();

    const Eigen::VectorXd post_mean = x_mean + anomalies * w_mean;
    Ensemble out;
    out.t = ens.t;
    out.particles = anomalies * transform;
    // The symmetric transform keeps the anomaly columns zero-sum only up to
    // round-off; recenter before adding the posterior mean.
    out.particles.colwise() -= out.particles.rowwise().mean().eval();
    out.particles.colwise() += post_mean;
    return out;
}

/// Square-root-filter pass against diffusion-type measurement records,
/// sharing prediction and initialization with the counting filter.
inline FilterTrajectory ensrf_run(const FilterConfig& config, const Eigen::MatrixXd& records,
                                  const ProcessModel& model, const MeasurementOperator& op) {
    if (records.rows() != op.n_m)
        throw std::invalid_argument("ensrf_run: records rows must match measurement dimension");
    if (!(config.dt > 0.0)) throw std::invalid_argument("ensrf_run: config.dt must be positive");
    const TimeGrid grid(0.0, config.dt, static_cast<std::size_t>(records.cols()));
    detail::check_filter_inputs(config, grid, model.n_x);

    const RandomSource root{config.seed, 0};
    Ensemble ens = init_ensemble(config, root.substream(streams::kInitialEnsemble));
    ens.t = grid.t0;
    const RandomSource process_noise = root.substream(streams::kProcessNoise);

    FilterTrajectory traj;
    traj.times.resize(static_cast<Eigen::Index>(grid.n_points()));
    traj.estimates.resize(model.n_x, static_cast<Eigen::Index>(grid.n_points()));
    traj.times[0] = grid.t0;
    traj.estimates.col(0) = estimate(ens);

    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        try {
            ens = predict(ens, model, grid.dt, process_noise.substream(i));
            ens = ensrf_step(ens, records.col(static_cast<Eigen::Index>(i)), op);
            traj.times[static_cast<Eigen::Index>(i) + 1] = grid.time(i + 1);
            traj.estimates.col(static_cast<Eigen::Index>(i) + 1) = estimate(ens);
        } catch (const std::exception& e) {
            detail::rethrow_at_step(i, e);
        }
    }
    return traj;
}

}  // namespace ekspf
