#pragma once

#include <stdexcept>

#include <Eigen/Dense>

namespace ekspf {

/// Discrete linear-Gaussian system x' = F x + w, y = H x + v,
/// w ~ N(0, Q), v ~ N(0, R).
struct LinearGaussianModel {
    Eigen::MatrixXd transition;   // F
    Eigen::MatrixXd process_cov;  // Q
    Eigen::MatrixXd observation;  // H
    Eigen::MatrixXd obs_cov;      // R
};

struct GaussianState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// One predict-update cycle of the Kalman filter.
inline GaussianState kalman_step(const GaussianState& prior, const LinearGaussianModel& model,
                                 const Eigen::VectorXd& obs) {
    const Eigen::MatrixXd& F = model.transition;
    const Eigen::MatrixXd& H = model.observation;
    if (F.cols() != prior.mean.size() || H.cols() != prior.mean.size() || obs.size() != H.rows())
        throw std::invalid_argument("kalman_step: inconsistent dimensions");

    // x- = F x,  P- = F P Fᵀ + Q
    const Eigen::VectorXd x_pred = F * prior.mean;
    const Eigen::MatrixXd p_pred = F * prior.cov * F.transpose() + model.process_cov;

    // S = H P- Hᵀ + R
    const Eigen::MatrixXd s = H * p_pred * H.transpose() + model.obs_cov;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
    if (!lu.isInvertible())
        throw std::runtime_error("kalman_step: singular innovation covariance");

    // K = P- Hᵀ S⁻¹, Joseph-form covariance keeps the posterior PSD.
    const Eigen::MatrixXd gain = p_pred * H.transpose() * lu.inverse();
    const Eigen::MatrixXd ikh =
        Eigen::MatrixXd::Identity(p_pred.rows(), p_pred.cols()) - gain * H;
    GaussianState posterior;
    posterior.mean = x_pred + gain * (obs - H * x_pred);
    posterior.cov = ikh * p_pred * ikh.transpose() + gain * model.obs_cov * gain.transpose();
    posterior.cov = 0.5 * (posterior.cov + posterior.cov.transpose()).eval();
    return posterior;
}

}  // namespace ekspf
