#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "ekspf/models.hpp"

namespace ekspf {

/// Multi-storey shear frame under harmonic load F_i(t) = f0 cos(omega t),
/// M X'' + C X' + K X = F, unit floor masses. Stiffness and damping are the
/// unknowns to be identified from per-floor counting measurements.
struct ShearFrameParams {
    int n_floors = 5;
    Eigen::VectorXd k_true = Eigen::VectorXd::Constant(5, 100.0);  // N/m
    Eigen::VectorXd c_true = Eigen::VectorXd::Constant(5, 5.0);    // Ns/m
    double f0 = 30.0;      // N
    double omega = 1.0;    // rad/s
    double sigma = 0.01;   // diffusion on each floor velocity

    void validate() const {
        if (n_floors < 1) throw std::invalid_argument("ShearFrameParams: need at least one floor");
        if (k_true.size() != n_floors || c_true.size() != n_floors)
            throw std::invalid_argument("ShearFrameParams: parameter vectors must have n_floors entries");
        if ((k_true.array() <= 0.0).any() || (c_true.array() <= 0.0).any())
            throw std::invalid_argument("ShearFrameParams: stiffness and damping must be positive");
    }
};

/// Chain (tridiagonal) matrix of a shear frame from per-storey coefficients:
/// diagonal (i,i) = p_i + p_{i+1} (top storey has no p_{n+1} term),
/// off-diagonal (i,i+1) = (i+1,i) = -p_{i+1}.
inline Eigen::MatrixXd chain_matrix(const Eigen::VectorXd& p) {
    const Eigen::Index n = p.size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        m(i, i) = p[i] + (i + 1 < n ? p[i + 1] : 0.0);
        if (i + 1 < n) {
            m(i, i + 1) = -p[i + 1];
            m(i + 1, i) = -p[i + 1];
        }
    }
    return m;
}

/// Drift of the augmented state [X(n), V(n), K(n), C(n)]:
///   X' = V,  V' = F(t) - C(theta) V - K(theta) X,  K' = 0,  C' = 0,
/// with K(theta), C(theta) assembled from the parameter block of the state.
inline Eigen::VectorXd shear_frame_drift(const Eigen::VectorXd& aug_state, double t,
                                         const ShearFrameParams& params) {
    const Eigen::Index n = params.n_floors;
    if (aug_state.size() != 4 * n)
        throw std::invalid_argument("shear_frame_drift: state must be [X, V, K, C] with 4 n_floors entries");
    const auto x = aug_state.segment(0, n);
    const auto v = aug_state.segment(n, n);
    const Eigen::MatrixXd stiffness = chain_matrix(aug_state.segment(2 * n, n));
    const Eigen::MatrixXd damping = chain_matrix(aug_state.segment(3 * n, n));
    const Eigen::VectorXd force =
        Eigen::VectorXd::Constant(n, params.f0 * std::cos(params.omega * t));

    Eigen::VectorXd drift = Eigen::VectorXd::Zero(4 * n);
    drift.segment(0, n) = v;
    drift.segment(n, n) = force - damping * v - stiffness * x;
    return drift;
}

/// Truth dynamics: 2n-state [X, V] with the true parameters, diffusion
/// sigma on every velocity.
inline ProcessModel shear_frame_truth_model(const ShearFrameParams& params) {
    params.validate();
    const Eigen::Index n = params.n_floors;
    const Eigen::MatrixXd stiffness = chain_matrix(params.k_true);
    const Eigen::MatrixXd damping = chain_matrix(params.c_true);
    ProcessModel model;
    model.n_x = static_cast<int>(2 * n);
    model.n_b = static_cast<int>(n);
    model.drift = [n, stiffness, damping, f0 = params.f0,
                   omega = params.omega](double t, const Eigen::VectorXd& s) -> Eigen::VectorXd {
        const auto x = s.segment(0, n);
        const auto v = s.segment(n, n);
        Eigen::VectorXd mu(2 * n);
        mu.segment(0, n) = v;
        mu.segment(n, n) = Eigen::VectorXd::Constant(n, f0 * std::cos(omega * t)) -
                           damping * v - stiffness * x;
        return mu;
    };
    model.diffusion = [n, sigma = params.sigma](double, const Eigen::VectorXd&) -> Eigen::MatrixXd {
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2 * n, n);
        g.bottomRows(n) = sigma * Eigen::MatrixXd::Identity(n, n);
        return g;
    };
    return model;
}

/// Filter dynamics on the augmented state [X, V, K, C]. Parameters have zero
/// drift; the prediction step adds an artificial random walk on them, with
/// intensity annealed linearly from walk_start to walk_end over [0, horizon],
/// to keep the parameter ensemble from collapsing.
inline ProcessModel shear_frame_filter_model(const ShearFrameParams& params, double walk_start,
                                             double walk_end, double horizon) {
    params.validate();
    if (walk_start < 0.0 || walk_end < 0.0)
        throw std::invalid_argument("shear_frame_filter_model: walk intensities must be non-negative");
    if (!(horizon > 0.0))
        throw std::invalid_argument("shear_frame_filter_model: horizon must be positive");
    const Eigen::Index n = params.n_floors;
    ProcessModel model;
    model.n_x = static_cast<int>(4 * n);
    model.n_b = static_cast<int>(3 * n);  // velocity noise + K walk + C walk
    model.drift = [params](double t, const Eigen::VectorXd& s) -> Eigen::VectorXd {
        return shear_frame_drift(s, t, params);
    };
    model.diffusion = [n, sigma = params.sigma, walk_start, walk_end,
                       horizon](double t, const Eigen::VectorXd&) -> Eigen::MatrixXd {
        const double frac = std::clamp(t / horizon, 0.0, 1.0);
        const double walk = walk_start + (walk_end - walk_start) * frac;
        Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4 * n, 3 * n);
        g.block(n, 0, n, n) = sigma * Eigen::MatrixXd::Identity(n, n);
        g.block(2 * n, n, n, n) = walk * Eigen::MatrixXd::Identity(n, n);
        g.block(3 * n, 2 * n, n, n) = walk * Eigen::MatrixXd::Identity(n, n);
        return g;
    };
    return model;
}

/// Counting intensity for identification: channel i fires at
/// alpha * |X_i| (displacement modulus of floor i). Works for both the
/// 2n truth state and the 4n augmented state.
inline IntensityModel shear_frame_intensity(int n_floors, double alpha) {
    if (n_floors < 1) throw std::invalid_argument("shear_frame_intensity: need at least one floor");
    if (!(alpha > 0.0)) throw std::invalid_argument("shear_frame_intensity: alpha must be positive");
    IntensityModel model;
    model.n_y = n_floors;
    model.rate = [n_floors, alpha](double, const Eigen::VectorXd& s) -> Eigen::VectorXd {
        return alpha * s.head(n_floors).cwiseAbs();
    };
    return model;
}

}  // namespace ekspf
