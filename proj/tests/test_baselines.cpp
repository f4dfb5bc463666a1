#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <gtest/gtest.h>

#include "ekspf/ensrf.hpp"
#include "ekspf/kalman.hpp"
#include "ekspf/sir.hpp"

namespace {

using ekspf::Ensemble;
using ekspf::FilterConfig;
using ekspf::GaussianState;
using ekspf::LinearGaussianModel;
using ekspf::MeasurementOperator;
using ekspf::RandomSource;
using ekspf::WeightedEnsemble;

TEST(KalmanStep, HugeObservationNoiseKeepsPrior) {
    GaussianState prior;
    prior.mean = Eigen::Vector2d(1.0, 2.0);
    prior.cov = Eigen::Vector2d(0.5, 0.25).asDiagonal();
    LinearGaussianModel model;
    model.transition = Eigen::Matrix2d::Identity();
    model.process_cov = Eigen::Matrix2d::Zero();
    model.observation = Eigen::Matrix2d::Identity();
    model.obs_cov = 1e12 * Eigen::Matrix2d::Identity();
    const GaussianState post = kalman_step(prior, model, Eigen::Vector2d(40.0, -7.0));
    EXPECT_TRUE(post.mean.isApprox(prior.mean, 1e-9));
    EXPECT_TRUE(post.cov.isApprox(prior.cov, 1e-9));
}

TEST(KalmanStep, ExactObservationSnapsToMeasurement) {
    GaussianState prior;
    prior.mean = Eigen::Vector2d(0.0, 0.0);
    prior.cov = Eigen::Vector2d(1.0, 2.0).asDiagonal();
    LinearGaussianModel model;
    model.transition = Eigen::Matrix2d::Identity();
    model.process_cov = Eigen::Matrix2d::Zero();
    model.observation = Eigen::Matrix2d::Identity();
    model.obs_cov = Eigen::Matrix2d::Zero();
    const Eigen::Vector2d obs(3.0, -1.0);
    const GaussianState post = kalman_step(prior, model, obs);
    EXPECT_LT((post.mean - obs).norm(), 1e-12);
    EXPECT_LT(post.cov.norm(), 1e-12);
}

TEST(KalmanStep, ScalarHandComputedCycle) {
    // Prior N(0, 1), F = 1, Q = 1, H = 1, R = 1, observation 3:
    // predicted N(0, 2), gain 2/3, posterior mean 2, posterior variance 2/3.
    GaussianState prior;
    prior.mean = Eigen::VectorXd::Zero(1);
    prior.cov = Eigen::MatrixXd::Ones(1, 1);
    LinearGaussianModel model;
    model.transition = Eigen::MatrixXd::Ones(1, 1);
    model.process_cov = Eigen::MatrixXd::Ones(1, 1);
    model.observation = Eigen::MatrixXd::Ones(1, 1);
    model.obs_cov = Eigen::MatrixXd::Ones(1, 1);
    const GaussianState post = kalman_step(prior, model, Eigen::VectorXd::Constant(1, 3.0));
    EXPECT_NEAR(post.mean[0], 2.0, 1e-12);
    EXPECT_NEAR(post.cov(0, 0), 2.0 / 3.0, 1e-12);
}

TEST(KalmanStep, SingularInnovationCovarianceIsAnError) {
    GaussianState prior;
    prior.mean = Eigen::Vector2d::Zero();
    prior.cov = Eigen::Matrix2d::Identity();
    LinearGaussianModel model;
    model.transition = Eigen::Matrix2d::Identity();
    model.process_cov = Eigen::Matrix2d::Zero();
    model.observation = Eigen::Matrix2d::Ones();  // rank one
    model.obs_cov = Eigen::Matrix2d::Zero();
    EXPECT_THROW(kalman_step(prior, model, Eigen::Vector2d::Zero()), std::runtime_error);

    model.observation = Eigen::MatrixXd::Ones(1, 3);
    EXPECT_THROW(kalman_step(prior, model, Eigen::VectorXd::Zero(1)), std::invalid_argument);
}

WeightedEnsemble uniform_pair(double a, double b) {
    WeightedEnsemble we;
    we.particles.resize(1, 2);
    we.particles << a, b;
    we.log_weights = Eigen::Vector2d::Constant(-std::log(2.0));
    return we;
}

TEST(SirStep, TwoParticleHandComputedWeights) {
    // Intensities 1 and 2, two arrivals over a unit step. Unnormalized
    // weights exp(2 ln 1 - 1) and exp(2 ln 2 - 2) normalize to
    // e/(e+4) and 4/(e+4).
    const WeightedEnsemble we = uniform_pair(0.0, 1.0);
    Eigen::MatrixXd intensities(1, 2);
    intensities << 1.0, 2.0;
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Constant(1, 2.0);
    const WeightedEnsemble out =
        ekspf::sir_poisson_step(we, delta_y, intensities, 1.0, 0.0, RandomSource{1, 0});
    const double e = std::exp(1.0);
    EXPECT_NEAR(out.weights()[0], e / (e + 4.0), 1e-12);
    EXPECT_NEAR(out.weights()[1], 4.0 / (e + 4.0), 1e-12);
    EXPECT_TRUE(out.particles == we.particles);
}

TEST(SirStep, ZeroCountSkipsLogTermEvenAtZeroIntensity) {
    const WeightedEnsemble we = uniform_pair(0.0, 1.0);
    Eigen::MatrixXd intensities(1, 2);
    intensities << 0.0, 5.0;
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Zero(1);
    const WeightedEnsemble out =
        ekspf::sir_poisson_step(we, delta_y, intensities, 0.1, 0.0, RandomSource{1, 0});
    const double ratio = std::exp(-0.0 * 0.1) / (std::exp(-0.0 * 0.1) + std::exp(-5.0 * 0.1));
    EXPECT_NEAR(out.weights()[0], ratio, 1e-12);
}

TEST(SirStep, ZeroIntensityWithObservedCountKillsParticle) {
    const WeightedEnsemble we = uniform_pair(0.0, 1.0);
    Eigen::MatrixXd intensities(1, 2);
    intensities << 0.0, 5.0;
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Constant(1, 1.0);
    const WeightedEnsemble out =
        ekspf::sir_poisson_step(we, delta_y, intensities, 0.1, 0.0, RandomSource{1, 0});
    EXPECT_EQ(out.weights()[0], 0.0);
    EXPECT_NEAR(out.weights()[1], 1.0, 1e-15);
}

TEST(SirStep, AllWeightsVanishingIsAnError) {
    const WeightedEnsemble we = uniform_pair(0.0, 1.0);
    const Eigen::MatrixXd intensities = Eigen::MatrixXd::Zero(1, 2);
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Constant(1, 1.0);
    EXPECT_THROW(ekspf::sir_poisson_step(we, delta_y, intensities, 0.1, 0.0, RandomSource{1, 0}),
                 std::runtime_error);
}

TEST(SirStep, IdenticalIntensitiesPreserveNonUniformWeights) {
    WeightedEnsemble we = uniform_pair(0.0, 1.0);
    we.log_weights << std::log(0.3), std::log(0.7);
    const Eigen::MatrixXd intensities = Eigen::MatrixXd::Constant(1, 2, 3.0);
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Constant(1, 2.0);
    const WeightedEnsemble out =
        ekspf::sir_poisson_step(we, delta_y, intensities, 0.5, 0.0, RandomSource{1, 0});
    EXPECT_NEAR(out.weights()[0], 0.3, 1e-12);
    EXPECT_NEAR(out.weights()[1], 0.7, 1e-12);
}

TEST(SirStep, ForcedResampleRestoresUniformWeightsFromSupport) {
    WeightedEnsemble we;
    we.particles.resize(1, 8);
    we.particles << 1, 2, 3, 4, 5, 6, 7, 8;
    we.log_weights = Eigen::VectorXd::Constant(8, -std::log(8.0));
    Eigen::MatrixXd intensities(1, 8);
    intensities << 1, 1, 1, 1, 1, 1, 1, 9;  // tilt mass toward the last member
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Constant(1, 3.0);
    const WeightedEnsemble out =
        ekspf::sir_poisson_step(we, delta_y, intensities, 0.1, 1.5, RandomSource{42, 0});
    ASSERT_EQ(out.size(), 8);
    EXPECT_TRUE(out.log_weights.isApproxToConstant(-std::log(8.0)));
    for (Eigen::Index k = 0; k < 8; ++k) {
        const double v = out.particles(0, k);
        EXPECT_TRUE(v == std::floor(v) && v >= 1.0 && v <= 8.0) << "copied particle " << v;
    }
}

TEST(SirStep, PerChannelRescalingCancelsInTheSmallStepLimit) {
    // With a vanishing step the compensator term is negligible and a common
    // factor applied to one channel's intensity shifts every log-weight by
    // the same amount, leaving the normalized weights unchanged.
    WeightedEnsemble we;
    we.particles.resize(1, 4);
    we.particles << 0, 1, 2, 3;
    we.log_weights = Eigen::VectorXd::Constant(4, -std::log(4.0));
    Eigen::MatrixXd intensities(1, 4);
    intensities << 0.5, 1.5, 2.5, 4.0;
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Constant(1, 3.0);
    const double dt = 1e-10;
    const WeightedEnsemble base =
        ekspf::sir_poisson_step(we, delta_y, intensities, dt, 0.0, RandomSource{1, 0});
    const WeightedEnsemble scaled = ekspf::sir_poisson_step(
        we, delta_y, Eigen::MatrixXd(7.0 * intensities), dt, 0.0, RandomSource{1, 0});
    EXPECT_TRUE(base.weights().isApprox(scaled.weights(), 1e-7));
}

TEST(SirStep, RejectsInconsistentArguments) {
    const WeightedEnsemble we = uniform_pair(0.0, 1.0);
    const Eigen::MatrixXd intensities = Eigen::MatrixXd::Ones(1, 2);
    const Eigen::VectorXd delta_y = Eigen::VectorXd::Ones(1);
    EXPECT_THROW(ekspf::sir_poisson_step(we, delta_y, Eigen::MatrixXd::Ones(1, 3), 0.1, 0.0,
                                         RandomSource{1, 0}),
                 std::invalid_argument);
    EXPECT_THROW(ekspf::sir_poisson_step(we, Eigen::VectorXd::Ones(2), intensities, 0.1, 0.0,
                                         RandomSource{1, 0}),
                 std::invalid_argument);
    EXPECT_THROW(ekspf::sir_poisson_step(we, Eigen::VectorXd::Constant(1, -1.0), intensities, 0.1,
                                         0.0, RandomSource{1, 0}),
                 std::invalid_argument);
    EXPECT_THROW(
        ekspf::sir_poisson_step(we, delta_y, intensities, 0.0, 0.0, RandomSource{1, 0}),
        std::invalid_argument);
}

TEST(WeightedEnsembleHelpers, MeanAndEffectiveSampleSize) {
    WeightedEnsemble we;
    we.particles.resize(1, 2);
    we.particles << 1.0, 5.0;
    we.log_weights.resize(2);
    we.log_weights << std::log(0.25), std::log(0.75);
    EXPECT_NEAR(we.weighted_mean()[0], 0.25 * 1.0 + 0.75 * 5.0, 1e-14);
    EXPECT_NEAR(we.effective_sample_size(), 1.0 / (0.0625 + 0.5625), 1e-12);
}

ekspf::ProcessModel ou_model(double theta, double sigma) {
    ekspf::ProcessModel model;
    model.n_x = 1;
    model.n_b = 1;
    model.drift = [theta](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return -theta * x;
    };
    model.diffusion = [sigma](double, const Eigen::VectorXd&) -> Eigen::MatrixXd {
        return Eigen::MatrixXd::Constant(1, 1, sigma);
    };
    return model;
}

FilterConfig scalar_config(int n_e, double dt, std::uint64_t seed) {
    FilterConfig config;
    config.n_e = n_e;
    config.dt = dt;
    config.initial_mean = Eigen::VectorXd::Zero(1);
    config.initial_cov_diag = Eigen::VectorXd::Ones(1);
    config.seed = seed;
    return config;
}

TEST(SirRun, ConstantIntensityReducesToPurePrediction) {
    const ekspf::TimeGrid grid(0.0, 0.02, 50);
    const Eigen::MatrixXd rates = Eigen::MatrixXd::Constant(1, 50, 30.0);
    const ekspf::CountingPath counts =
        ekspf::simulate_counting_path(RandomSource{10, 0}, rates, grid);
    ekspf::IntensityModel intensity;
    intensity.n_y = 1;
    intensity.rate = [](double, const Eigen::VectorXd&) -> Eigen::VectorXd {
        return Eigen::VectorXd::Constant(1, 30.0);
    };
    const FilterConfig config = scalar_config(64, grid.dt, 99);
    const ekspf::FilterTrajectory traj =
        ekspf::sir_run(config, counts, ou_model(1.0, 0.5), intensity);

    const RandomSource root{config.seed, 0};
    Ensemble ens = ekspf::init_ensemble(config, root.substream(ekspf::streams::kInitialEnsemble));
    ens.t = grid.t0;
    const RandomSource process = root.substream(ekspf::streams::kProcessNoise);
    for (std::size_t i = 0; i < grid.n_steps; ++i) {
        ens = ekspf::predict(ens, ou_model(1.0, 0.5), grid.dt, process.substream(i));
        EXPECT_NEAR(traj.estimates(0, static_cast<Eigen::Index>(i) + 1), ekspf::estimate(ens)[0],
                    1e-12);
    }
}

TEST(SirRun, RejectsChannelMismatch) {
    ekspf::CountingPath counts;
    counts.grid = ekspf::TimeGrid(0.0, 0.1, 4);
    counts.counts.setZero(2, 5);
    ekspf::IntensityModel intensity;
    intensity.n_y = 1;
    intensity.rate = [](double, const Eigen::VectorXd&) -> Eigen::VectorXd {
        return Eigen::VectorXd::Ones(1);
    };
    EXPECT_THROW(ekspf::sir_run(scalar_config(8, 0.1, 1), counts, ou_model(1.0, 0.1), intensity),
                 std::invalid_argument);
}

TEST(SirRun, EstimatorSpreadShrinksWithMoreParticles) {
    const ekspf::TimeGrid grid(0.0, 0.01, 100);
    const ekspf::ProcessModel model = ou_model(1.0, 0.5);
    ekspf::IntensityModel intensity;
    intensity.n_y = 1;
    intensity.rate = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return Eigen::VectorXd::Constant(1, 20.0 * std::exp(0.5 * x[0]));
    };
    Eigen::MatrixXd rates(1, grid.n_steps);
    for (std::size_t i = 0; i < grid.n_steps; ++i)
        rates(0, i) = 20.0 * std::exp(0.5 * 0.3 * std::sin(grid.time(i + 1)));
    const ekspf::CountingPath counts =
        ekspf::simulate_counting_path(RandomSource{2024, 0}, rates, grid);

    const auto spread = [&](int n_e) {
        std::vector<double> finals;
        for (std::uint64_t seed = 1; seed <= 8; ++seed) {
            const ekspf::FilterTrajectory traj =
                ekspf::sir_run(scalar_config(n_e, grid.dt, seed), counts, model, intensity);
            finals.push_back(traj.estimates(0, traj.estimates.cols() - 1));
        }
        const double mean = std::accumulate(finals.begin(), finals.end(), 0.0) / 8.0;
        double var = 0.0;
        for (const double v : finals) var += (v - mean) * (v - mean);
        return var / 7.0;
    };
    EXPECT_LT(spread(10000), spread(100));
}

MeasurementOperator linear_operator(const Eigen::MatrixXd& h, const Eigen::VectorXd& noise_std) {
    MeasurementOperator op;
    op.n_m = static_cast<int>(h.rows());
    op.observe = [h](double, const Eigen::VectorXd& x) -> Eigen::VectorXd { return h * x; };
    op.noise_std = noise_std;
    return op;
}

TEST(EnsrfStep, HugeNoiseLeavesEnsembleNearlyUnchanged) {
    Ensemble ens;
    ens.t = 0.0;
    ens.particles.resize(2, 16);
    for (Eigen::Index j = 0; j < 16; ++j) {
        ens.particles(0, j) = std::sin(0.7 * static_cast<double>(j));
        ens.particles(1, j) = std::cos(1.3 * static_cast<double>(j));
    }
    const MeasurementOperator op =
        linear_operator(Eigen::Matrix2d::Identity(), Eigen::Vector2d::Constant(1e9));
    const Ensemble out = ekspf::ensrf_step(ens, Eigen::Vector2d(50.0, -50.0), op);
    EXPECT_TRUE(out.particles.isApprox(ens.particles, 1e-6));
}

TEST(EnsrfStep, MatchesExactFilterMomentsOnLinearObservations) {
    const Eigen::Index n_e = 64;
    Ensemble ens;
    ens.t = 0.0;
    ens.particles.resize(3, n_e);
    auto rng = RandomSource{314, 0}.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index j = 0; j < n_e; ++j) {
        ens.particles(0, j) = 1.0 + 0.8 * normal(rng);
        ens.particles(1, j) = -2.0 + 0.5 * normal(rng);
        ens.particles(2, j) = 0.3 * normal(rng);
    }
    Eigen::MatrixXd h(2, 3);
    h << 1, 0, 1,
         0, 1, 0;
    const Eigen::Vector2d noise_std(0.4, 0.9);
    const MeasurementOperator op = linear_operator(h, noise_std);
    const Eigen::Vector2d obs(1.6, -1.2);

    const Eigen::VectorXd prior_mean = ens.particles.rowwise().mean();
    const Eigen::MatrixXd anom = ens.particles.colwise() - prior_mean;
    const Eigen::MatrixXd prior_cov = anom * anom.transpose() / static_cast<double>(n_e - 1);

    LinearGaussianModel model;
    model.transition = Eigen::Matrix3d::Identity();
    model.process_cov = Eigen::Matrix3d::Zero();
    model.observation = h;
    model.obs_cov = noise_std.array().square().matrix().asDiagonal();
    const GaussianState exact = kalman_step({prior_mean, prior_cov}, model, obs);

    const Ensemble post = ekspf::ensrf_step(ens, obs, op);
    const Eigen::VectorXd post_mean = post.particles.rowwise().mean();
    const Eigen::MatrixXd post_anom = post.particles.colwise() - post_mean;
    const Eigen::MatrixXd post_cov = post_anom * post_anom.transpose() / static_cast<double>(n_e - 1);

    EXPECT_LT((post_mean - exact.mean).norm(), 1e-8);
    EXPECT_LT((post_cov - exact.cov).norm(), 1e-8);
}

TEST(EnsrfStep, RejectsSingularNoiseAndBadShapes) {
    Ensemble ens;
    ens.t = 0.0;
    ens.particles = Eigen::MatrixXd::Random(2, 8);
    const MeasurementOperator zero_noise =
        linear_operator(Eigen::Matrix2d::Identity(), Eigen::Vector2d(0.3, 0.0));
    EXPECT_THROW(ekspf::ensrf_step(ens, Eigen::Vector2d::Zero(), zero_noise), std::runtime_error);

    const MeasurementOperator op =
        linear_operator(Eigen::Matrix2d::Identity(), Eigen::Vector2d(0.3, 0.3));
    EXPECT_THROW(ekspf::ensrf_step(ens, Eigen::Vector3d::Zero(), op), std::invalid_argument);

    Ensemble tiny;
    tiny.t = 0.0;
    tiny.particles = Eigen::MatrixXd::Random(2, 1);
    EXPECT_THROW(ekspf::ensrf_step(tiny, Eigen::Vector2d::Zero(), op), std::invalid_argument);
}

TEST(EnsrfRun, DeterministicAndValidatesShapes) {
    const Eigen::MatrixXd records = Eigen::MatrixXd::Constant(1, 20, 0.5);
    const MeasurementOperator op =
        linear_operator(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, 0.2));
    const FilterConfig config = scalar_config(32, 0.05, 7);
    const ekspf::FilterTrajectory a = ekspf::ensrf_run(config, records, ou_model(1.0, 0.3), op);
    const ekspf::FilterTrajectory b = ekspf::ensrf_run(config, records, ou_model(1.0, 0.3), op);
    EXPECT_TRUE(a.estimates == b.estimates);
    EXPECT_EQ(a.estimates.cols(), 21);

    EXPECT_THROW(ekspf::ensrf_run(config, Eigen::MatrixXd::Constant(2, 20, 0.5),
                                  ou_model(1.0, 0.3), op),
                 std::invalid_argument);
}

}  // namespace
