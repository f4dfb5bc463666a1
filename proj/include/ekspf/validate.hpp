#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ekspf/counting.hpp"
#include "ekspf/ensrf.hpp"
#include "ekspf/filter.hpp"
#include "ekspf/harness.hpp"
#include "ekspf/kalman.hpp"
#include "ekspf/random.hpp"
#include "ekspf/rmse.hpp"
#include "ekspf/sir.hpp"

namespace ekspf {

/// FNV-1a over a file's bytes; order-independent artifact digests are built
/// by combining per-file hashes keyed by relative path.
inline std::uint64_t hash_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("hash_file: cannot open " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Digest of every regular file under dir, keyed by relative path.
inline std::map<std::string, std::uint64_t> hash_directory(const std::filesystem::path& dir) {
    std::map<std::string, std::uint64_t> digests;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
        if (entry.is_regular_file())
            digests[std::filesystem::relative(entry.path(), dir).generic_string()] =
                hash_file(entry.path());
    return digests;
}

namespace detail {

inline Ensemble make_test_ensemble(int n_e, int n_x, std::uint64_t seed) {
    Ensemble ens;
    ens.t = 0.0;
    auto rng = RandomSource{seed, 42}.engine();
    ens.particles.resize(n_x, n_e);
    for (int j = 0; j < n_e; ++j)
        for (int c = 0; c < n_x; ++c) ens.particles(c, j) = standard_normal(rng);
    return ens;
}

}  // namespace detail

/// Fast invariant and oracle checks, one line per check. Returns the number
/// of failures.
inline int run_validation(std::ostream& os) {
    int failures = 0;
    auto check = [&](const std::string& name, const std::function<bool()>& fn) {
        bool ok = false;
        std::string detail;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            detail = e.what();
        }
        if (ok) {
            os << "[ok]   " << name << "\n";
        } else {
            ++failures;
            os << "[FAIL] " << name << (detail.empty() ? "" : ": " + detail) << "\n";
        }
    };

    check("brownian increments: determinism and zero-dt case", [] {
        const RandomSource src{7, 3};
        const Eigen::VectorXd a = brownian_increments(src, 16, 0.25);
        const Eigen::VectorXd b = brownian_increments(src, 16, 0.25);
        return a == b && brownian_increments(src, 4, 0.0).isZero(0.0);
    });

    check("counting path: cumulative monotone, increments consistent", [] {
        const TimeGrid grid(0.0, 0.05, 200);
        const Eigen::MatrixXd rates = Eigen::MatrixXd::Constant(2, 200, 30.0);
        const CountingPath path = simulate_counting_path(RandomSource{11, 0}, rates, grid);
        const CountMatrix inc = counting_increments(path);
        return (inc.array() >= 0).all() &&
               (inc.rowwise().sum().array() == path.counts.col(path.counts.cols() - 1).array()).all();
    });

    check("gain nullity: constant intensity gives zero gain", [] {
        const Ensemble ens = detail::make_test_ensemble(128, 3, 5);
        const Eigen::MatrixXd lambda = Eigen::MatrixXd::Constant(2, 128, 4.0);
        const Gain gain = compute_gain(ens, lambda);
        return gain.g.norm() <= 1e-12 * ens.particles.norm();
    });

    check("mean-shift identity of the innovation update", [] {
        const Ensemble ens = detail::make_test_ensemble(64, 2, 6);
        Eigen::MatrixXd lambda(1, 64);
        for (int j = 0; j < 64; ++j) lambda(0, j) = 1.0 + 0.1 * j;
        const Gain gain = compute_gain(ens, lambda);
        const Eigen::VectorXd dy = Eigen::VectorXd::Constant(1, 3.0);
        const Ensemble post = update(ens, gain, dy, lambda, 0.02, true);
        const Eigen::VectorXd shift = estimate(post) - estimate(ens);
        const Eigen::VectorXd expected = gain.g * (dy - 0.02 * lambda.rowwise().mean());
        return (shift - expected).norm() <= 1e-12 * (1.0 + expected.norm());
    });

    check("permutation invariance of gain and estimate", [] {
        const Ensemble ens = detail::make_test_ensemble(32, 2, 9);
        Eigen::MatrixXd lambda(1, 32);
        for (int j = 0; j < 32; ++j) lambda(0, j) = std::exp(0.3 * ens.particles(0, j));
        Ensemble perm = ens;
        Eigen::MatrixXd lambda_perm = lambda;
        for (int j = 0; j < 32; ++j) {
            perm.particles.col(j) = ens.particles.col(31 - j);
            lambda_perm.col(j) = lambda.col(31 - j);
        }
        const Gain g1 = compute_gain(ens, lambda);
        const Gain g2 = compute_gain(perm, lambda_perm);
        return (g1.g - g2.g).norm() <= 1e-13 && (estimate(ens) - estimate(perm)).norm() <= 1e-13;
    });

    check("kalman oracle: scalar hand-computed step", [] {
        LinearGaussianModel m;
        m.transition = m.process_cov = m.observation = m.obs_cov = Eigen::MatrixXd::Constant(1, 1, 1.0);
        const GaussianState post =
            kalman_step({Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0)}, m,
                        Eigen::VectorXd::Constant(1, 3.0));
        return std::abs(post.mean[0] - 2.0) < 1e-12 && std::abs(post.cov(0, 0) - 2.0 / 3.0) < 1e-12;
    });

    check("sir weights normalized after a step", [] {
        WeightedEnsemble we;
        we.particles = detail::make_test_ensemble(64, 1, 3).particles;
        we.log_weights.setConstant(64, -std::log(64.0));
        Eigen::MatrixXd lambda(1, 64);
        for (int j = 0; j < 64; ++j) lambda(0, j) = std::exp(0.5 * we.particles(0, j));
        const WeightedEnsemble post = sir_poisson_step(we, Eigen::VectorXd::Constant(1, 2.0), lambda,
                                                       0.01, 0.5, RandomSource{1, 2});
        return std::abs(post.weights().sum() - 1.0) <= 1e-12;
    });

    check("square-root filter matches kalman moments", [] {
        const Ensemble ens = detail::make_test_ensemble(256, 4, 12);
        MeasurementOperator op;
        op.n_m = 3;
        Eigen::MatrixXd h(3, 4);
        auto rng = RandomSource{21, 0}.engine();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 4; ++j) h(i, j) = standard_normal(rng);
        op.observe = [h](double, const Eigen::VectorXd& x) -> Eigen::VectorXd { return h * x; };
        op.noise_std = Eigen::Vector3d(0.5, 1.0, 2.0);
        const Eigen::VectorXd obs = Eigen::Vector3d(0.3, -0.7, 1.1);

        const Eigen::VectorXd mean = ens.particles.rowwise().mean();
        const Eigen::MatrixXd anom = ens.particles.colwise() - mean;
        const Eigen::MatrixXd cov = anom * anom.transpose() / (ens.size() - 1);
        LinearGaussianModel m;
        m.transition = Eigen::MatrixXd::Identity(4, 4);
        m.process_cov = Eigen::MatrixXd::Zero(4, 4);
        m.observation = h;
        m.obs_cov = op.noise_std.array().square().matrix().asDiagonal();
        const GaussianState kf = kalman_step({mean, cov}, m, obs);

        const Ensemble post = ensrf_step(ens, obs, op);
        const Eigen::VectorXd pmean = post.particles.rowwise().mean();
        const Eigen::MatrixXd panom = post.particles.colwise() - pmean;
        const Eigen::MatrixXd pcov = panom * panom.transpose() / (post.size() - 1);
        return (pmean - kf.mean).norm() <= 1e-8 * (1.0 + kf.mean.norm()) &&
               (pcov - kf.cov).norm() <= 1e-8 * (1.0 + kf.cov.norm());
    });

    check("rmse formula: hand-computed two-run case", [] {
        Eigen::MatrixXd truth = Eigen::MatrixXd::Zero(1, 3);
        Eigen::MatrixXd e1 = Eigen::MatrixXd::Constant(1, 3, 1.0);
        Eigen::MatrixXd e2 = Eigen::MatrixXd::Constant(1, 3, 3.0);
        const Eigen::VectorXd rmse = rmse_over_runs({e1, e2}, truth, {0});
        return std::abs(rmse[1] - std::sqrt(5.0)) <= 1e-14;
    });

    check("innovation dt switch shifts the update by the rate-dt factor", [] {
        const Ensemble ens = detail::make_test_ensemble(48, 2, 14);
        Eigen::MatrixXd lambda(1, 48);
        for (int j = 0; j < 48; ++j) lambda(0, j) = 2.0 + 0.05 * j;
        const Gain gain = compute_gain(ens, lambda);
        const Eigen::VectorXd dy = Eigen::VectorXd::Constant(1, 1.0);
        const double dt = 0.1;
        const Ensemble with_dt = update(ens, gain, dy, lambda, dt, true);
        const Ensemble without_dt = update(ens, gain, dy, lambda, dt, false);
        const Eigen::MatrixXd expected = gain.g * ((1.0 - dt) * lambda);
        return ((without_dt.particles - with_dt.particles) + expected).norm() <= 1e-12;
    });

    check("full-pipeline determinism on a small artifact", [] {
        const std::filesystem::path dir =
            std::filesystem::temp_directory_path() / "ekspf_validate_artifact";
        std::filesystem::remove_all(dir);
        ExperimentConfig cfg;
        cfg.experiment = Experiment::ou_validation;
        cfg.seed = 33;
        cfg.n_runs = 1;
        cfg.ensemble_sizes = {16};
        cfg.filter = FilterKind::ekspf;
        cfg.overrides = {{"horizon", 0.5}};
        cfg.out_dir = dir.string();
        run_experiment(cfg);
        const auto first = hash_directory(dir);
        run_experiment(cfg);
        const auto second = hash_directory(dir);
        std::filesystem::remove_all(dir);
        return first == second && !first.empty();
    });

    return failures;
}

}  // namespace ekspf
