#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ekspf/counting.hpp"
#include "ekspf/models.hpp"
#include "ekspf/random.hpp"

namespace ekspf {

/// Planar manoeuvring-target scenario. State is [x, vx, y, vy] in SI units;
/// each manoeuvre is a constant acceleration applied over exactly one
/// sampling interval starting at its scheduled time.
struct TrackingScenario {
    Eigen::Vector4d x0{0.5, 3.0, 1.0, 1.0};
    std::vector<double> manoeuvre_times{20.0, 30.0, 60.0, 80.0};
    std::vector<Eigen::Vector2d> manoeuvre_accels{
        {-40.0, 40.0}, {25.0, -25.0}, {25.0, -25.0}, {-60.0, 60.0}};
    double accel_intensity = 0.1;       // diffusion intensity of the residual acceleration
    double manoeuvre_intensity = 100.0; // extra diffusion budgeted for manoeuvres in the filter model
    Eigen::Vector2d sensor_origin{0.0, 0.0};
    double horizon = 100.0;

    void validate() const {
        if (manoeuvre_times.size() != manoeuvre_accels.size())
            throw std::invalid_argument("TrackingScenario: one acceleration per manoeuvre time required");
        for (std::size_t k = 0; k < manoeuvre_times.size(); ++k) {
            if (k > 0 && manoeuvre_times[k] <= manoeuvre_times[k - 1])
                throw std::invalid_argument("TrackingScenario: manoeuvre times must be strictly increasing");
            if (manoeuvre_times[k] < 0.0 || manoeuvre_times[k] >= horizon)
                throw std::invalid_argument("TrackingScenario: manoeuvre times must lie inside the horizon");
        }
        if (accel_intensity < 0.0 || manoeuvre_intensity < 0.0)
            throw std::invalid_argument("TrackingScenario: intensities must be non-negative");
    }
};

/// Constant-velocity transition with piecewise-constant acceleration input:
/// position picks up v dt + a dt²/2, velocity picks up a dt.
inline Eigen::Vector4d cv_transition(const Eigen::Vector4d& state, const Eigen::Vector2d& accel,
                                     double dt) {
    Eigen::Vector4d out;
    out[0] = state[0] + state[1] * dt + 0.5 * accel[0] * dt * dt;
    out[1] = state[1] + accel[0] * dt;
    out[2] = state[2] + state[3] * dt + 0.5 * accel[1] * dt * dt;
    out[3] = state[3] + accel[1] * dt;
    return out;
}

/// Bearing (rad, atan2 convention) and range (m) of the target relative to
/// the sensor. The bearing is undefined at the sensor position.
inline Eigen::Vector2d bearing_range(const Eigen::Vector4d& state, const Eigen::Vector2d& origin) {
    const double dx = state[0] - origin[0];
    const double dy = state[2] - origin[1];
    if (dx == 0.0 && dy == 0.0)
        throw std::domain_error("bearing_range: target at sensor origin");
    return {std::atan2(dy, dx), std::sqrt(dx * dx + dy * dy)};
}

/// Deterministic truth: constant-velocity flight with the scheduled
/// manoeuvre impulses, 4 x (n_steps + 1).
inline Eigen::MatrixXd tracking_truth(const TrackingScenario& scenario, const TimeGrid& grid) {
    scenario.validate();
    std::vector<Eigen::Vector2d> step_accels(grid.n_steps, Eigen::Vector2d::Zero());
    for (std::size_t k = 0; k < scenario.manoeuvre_times.size(); ++k) {
        const auto idx = static_cast<std::size_t>(std::llround((scenario.manoeuvre_times[k] - grid.t0) / grid.dt));
        if (idx >= grid.n_steps)
            throw std::invalid_argument("tracking_truth: manoeuvre time outside grid");
        step_accels[idx] = scenario.manoeuvre_accels[k];
    }
    Eigen::MatrixXd truth(4, static_cast<Eigen::Index>(grid.n_points()));
    Eigen::Vector4d x = scenario.x0;
    truth.col(0) = x;
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        x = cv_transition(x, step_accels[i], grid.dt);
        truth.col(static_cast<Eigen::Index>(i) + 1) = x;
    }
    return truth;
}

/// Filter process model: constant-velocity drift, white-noise acceleration
/// on both axes with intensity accel_intensity + manoeuvre_intensity.
inline ProcessModel tracking_process_model(const TrackingScenario& scenario) {
    scenario.validate();
    const double q = std::sqrt(scenario.accel_intensity + scenario.manoeuvre_intensity);
    ProcessModel model;
    model.n_x = 4;
    model.n_b = 2;
    model.drift = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::Vector4d mu;
        mu << x[1], 0.0, x[3], 0.0;
        return mu;
    };
    model.diffusion = [q](double, const Eigen::VectorXd&) -> Eigen::MatrixXd {
        Eigen::Matrix<double, 4, 2> sigma = Eigen::Matrix<double, 4, 2>::Zero();
        sigma(1, 0) = q;
        sigma(3, 1) = q;
        return sigma;
    };
    return model;
}

/// Bearing-range measurement operator; noise_std is filled by the caller
/// (the benchmark uses a fixed fraction of typical signal magnitude).
inline MeasurementOperator tracking_measurement_operator(const TrackingScenario& scenario,
                                                         const Eigen::Vector2d& noise_std) {
    MeasurementOperator op;
    op.n_m = 2;
    op.noise_std = noise_std;
    op.observe = [origin = scenario.sensor_origin](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return bearing_range(Eigen::Vector4d(x), origin);
    };
    return op;
}

/// Noisy bearing-range records along a truth trajectory, one column per step:
/// record i is the measurement at t_{i+1} with additive Gaussian noise whose
/// standard deviation is noise_frac times the clean value magnitude, per
/// component (proportional-noise convention).
inline Eigen::MatrixXd tracking_records(const Eigen::MatrixXd& truth, const TrackingScenario& scenario,
                                        double noise_frac, const RandomSource& source) {
    if (noise_frac < 0.0) throw std::invalid_argument("tracking_records: noise_frac must be non-negative");
    const Eigen::Index n_steps = truth.cols() - 1;
    Eigen::MatrixXd records(2, n_steps);
    auto rng = source.engine();
    for (Eigen::Index i = 0; i < n_steps; ++i) {
        const Eigen::Vector2d clean = bearing_range(truth.col(i + 1), scenario.sensor_origin);
        records(0, i) = clean[0] + noise_frac * std::abs(clean[0]) * standard_normal(rng);
        records(1, i) = clean[1] + noise_frac * std::abs(clean[1]) * standard_normal(rng);
    }
    return records;
}

}  // namespace ekspf
