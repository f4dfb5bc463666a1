#pragma once

#include <functional>
#include <stdexcept>
#include <utility>

#include <Eigen/Dense>

namespace ekspf {

/// Continuous-time process dX = drift(t, X) dt + diffusion(t, X) dB,
/// with X in R^{n_x} and B an n_b-dimensional standard Brownian motion.
struct ProcessModel {
    int n_x = 0;
    int n_b = 0;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> drift;
    std::function<Eigen::MatrixXd(double, const Eigen::VectorXd&)> diffusion;
};

/// Conditional intensity of an n_y-channel counting observation,
/// rate(t, x) >= 0 componentwise.
struct IntensityModel {
    int n_y = 0;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> rate;
};

/// Diffusion-type measurement map y = observe(t, x) with additive noise of
/// standard deviation noise_std per channel.
struct MeasurementOperator {
    int n_m = 0;
    std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> observe;
    Eigen::VectorXd noise_std;
};

/// Intensity lambda_l(t, x) = alpha_l * |observe(t, x)_l|. The modulus keeps
/// rates non-negative, so signed measurement maps remain usable as Poisson
/// rates; alpha scales counts per unit measurement.
inline IntensityModel virtual_intensity(const Eigen::VectorXd& alpha, const MeasurementOperator& op) {
    if (alpha.size() != op.n_m)
        throw std::invalid_argument("virtual_intensity: alpha size must match measurement dimension");
    if (!alpha.allFinite() || (alpha.array() <= 0.0).any())
        throw std::invalid_argument("virtual_intensity: alpha must be positive and finite");
    IntensityModel model;
    model.n_y = op.n_m;
    model.rate = [alpha, observe = op.observe](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return (alpha.array() * observe(t, x).array().abs()).matrix();
    };
    return model;
}

}  // namespace ekspf
