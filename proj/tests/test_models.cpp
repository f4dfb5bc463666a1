#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "ekspf/counting.hpp"
#include "ekspf/duffing.hpp"
#include "ekspf/models.hpp"
#include "ekspf/shear_frame.hpp"
#include "ekspf/tracking.hpp"

namespace {

using ekspf::DuffingControlProblem;
using ekspf::MeasurementOperator;
using ekspf::ShearFrameParams;
using ekspf::TimeGrid;
using ekspf::TrackingScenario;

TEST(VirtualIntensity, ScalesAbsoluteMeasurementValues) {
    MeasurementOperator op;
    op.n_m = 2;
    op.observe = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return Eigen::Vector2d(-x[0], x[0] + 1.0);
    };
    const Eigen::Vector2d alpha(10.0, 100.0);
    const ekspf::IntensityModel model = ekspf::virtual_intensity(alpha, op);
    const Eigen::VectorXd rate = model.rate(0.0, Eigen::VectorXd::Constant(1, 2.0));
    EXPECT_DOUBLE_EQ(rate[0], 20.0);
    EXPECT_DOUBLE_EQ(rate[1], 300.0);
}

TEST(VirtualIntensity, NonNegativeForRandomStates) {
    MeasurementOperator op;
    op.n_m = 3;
    op.observe = [](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return Eigen::Vector3d(std::sin(x[0]), x[1] - 3.0, std::cos(t) * x[0] * x[1]);
    };
    const ekspf::IntensityModel model =
        ekspf::virtual_intensity(Eigen::Vector3d(1.0, 2.0, 3.0), op);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist(0.0, 10.0);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector2d x(dist(rng), dist(rng));
        const Eigen::VectorXd rate = model.rate(dist(rng), x);
        EXPECT_TRUE((rate.array() >= 0.0).all());
    }
}

TEST(VirtualIntensity, RejectsBadAlpha) {
    MeasurementOperator op;
    op.n_m = 2;
    op.observe = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.head(2); };
    EXPECT_THROW(ekspf::virtual_intensity(Eigen::Vector3d::Ones(), op), std::invalid_argument);
    EXPECT_THROW(ekspf::virtual_intensity(Eigen::Vector2d(1.0, 0.0), op), std::invalid_argument);
    EXPECT_THROW(ekspf::virtual_intensity(Eigen::Vector2d(1.0, -2.0), op), std::invalid_argument);
}

TEST(CvTransition, PropagatesPositionAndVelocity) {
    const Eigen::Vector4d moved =
        ekspf::cv_transition(Eigen::Vector4d(0.0, 1.0, 0.0, 0.0), Eigen::Vector2d::Zero(), 1.0);
    EXPECT_TRUE(moved.isApprox(Eigen::Vector4d(1.0, 1.0, 0.0, 0.0)));

    const Eigen::Vector4d accelerated =
        ekspf::cv_transition(Eigen::Vector4d::Zero(), Eigen::Vector2d(2.0, 0.0), 1.0);
    EXPECT_TRUE(accelerated.isApprox(Eigen::Vector4d(1.0, 2.0, 0.0, 0.0)));
}

TEST(BearingRange, MatchesPlaneGeometry) {
    const Eigen::Vector2d origin(0.0, 0.0);
    const Eigen::Vector2d east = ekspf::bearing_range(Eigen::Vector4d(1.0, 0.0, 0.0, 0.0), origin);
    EXPECT_DOUBLE_EQ(east[0], 0.0);
    EXPECT_DOUBLE_EQ(east[1], 1.0);

    const Eigen::Vector2d north = ekspf::bearing_range(Eigen::Vector4d(0.0, 0.0, 2.0, 0.0), origin);
    EXPECT_DOUBLE_EQ(north[0], M_PI / 2.0);
    EXPECT_DOUBLE_EQ(north[1], 2.0);

    const Eigen::Vector2d oblique = ekspf::bearing_range(Eigen::Vector4d(3.0, 0.0, 4.0, 0.0), origin);
    EXPECT_DOUBLE_EQ(oblique[0], std::atan2(4.0, 3.0));
    EXPECT_DOUBLE_EQ(oblique[1], 5.0);
}

TEST(BearingRange, UndefinedAtSensorOrigin) {
    EXPECT_THROW(ekspf::bearing_range(Eigen::Vector4d::Zero(), Eigen::Vector2d::Zero()),
                 std::domain_error);
}

TEST(TrackingScenarioChecks, RejectsInconsistentManoeuvres) {
    TrackingScenario sc;
    sc.manoeuvre_times = {20.0, 10.0, 60.0, 80.0};
    EXPECT_THROW(sc.validate(), std::invalid_argument);
    sc = TrackingScenario{};
    sc.manoeuvre_times.pop_back();
    EXPECT_THROW(sc.validate(), std::invalid_argument);
    sc = TrackingScenario{};
    sc.horizon = 50.0;
    EXPECT_THROW(sc.validate(), std::invalid_argument);
}

TEST(TrackingTruth, AppliesEachManoeuvreOverOneStep) {
    TrackingScenario sc;
    const TimeGrid grid(0.0, 0.1, 1000);
    const Eigen::MatrixXd truth = ekspf::tracking_truth(sc, grid);
    ASSERT_EQ(truth.rows(), 4);
    ASSERT_EQ(truth.cols(), 1001);
    EXPECT_TRUE(truth.col(0).isApprox(Eigen::Vector4d(0.5, 3.0, 1.0, 1.0)));
    // Velocity jumps by a * dt across the manoeuvre step, stays flat elsewhere.
    EXPECT_NEAR(truth(1, 201) - truth(1, 200), -40.0 * 0.1, 1e-12);
    EXPECT_NEAR(truth(3, 201) - truth(3, 200), 40.0 * 0.1, 1e-12);
    EXPECT_NEAR(truth(1, 200) - truth(1, 199), 0.0, 1e-12);
    EXPECT_NEAR(truth(1, 801) - truth(1, 800), -60.0 * 0.1, 1e-12);
}

TEST(TrackingRecords, ZeroNoiseReproducesCleanMeasurements) {
    TrackingScenario sc;
    const TimeGrid grid(0.0, 0.1, 1000);
    const Eigen::MatrixXd truth = ekspf::tracking_truth(sc, grid);
    const Eigen::MatrixXd records =
        ekspf::tracking_records(truth, sc, 0.0, ekspf::RandomSource{3, 0});
    ASSERT_EQ(records.cols(), 1000);
    for (Eigen::Index i = 0; i < records.cols(); ++i) {
        const Eigen::Vector2d clean = ekspf::bearing_range(truth.col(i + 1), sc.sensor_origin);
        EXPECT_DOUBLE_EQ(records(0, i), clean[0]);
        EXPECT_DOUBLE_EQ(records(1, i), clean[1]);
    }
}

TEST(ChainMatrix, AssemblesSymmetricTridiagonalPattern) {
    Eigen::VectorXd p(5);
    p << 1.0, 2.0, 3.0, 4.0, 5.0;
    const Eigen::MatrixXd m = ekspf::chain_matrix(p);
    EXPECT_TRUE(m.isApprox(m.transpose()));
    for (Eigen::Index i = 0; i < 5; ++i) {
        const double next = i + 1 < 5 ? p[i + 1] : 0.0;
        EXPECT_DOUBLE_EQ(m(i, i), p[i] + next);
        if (i + 1 < 5) EXPECT_DOUBLE_EQ(m(i, i + 1), -p[i + 1]);
        for (Eigen::Index j = i + 2; j < 5; ++j) EXPECT_DOUBLE_EQ(m(i, j), 0.0);
    }
}

TEST(ShearFrameDrift, EquilibriumIsStationary) {
    ShearFrameParams params;
    params.f0 = 0.0;
    const Eigen::VectorXd drift = ekspf::shear_frame_drift(Eigen::VectorXd::Zero(20), 0.0, params);
    EXPECT_TRUE(drift.isZero(0.0));
}

TEST(ShearFrameDrift, ForcingEntersVelocityBlockOnly) {
    ShearFrameParams params;
    Eigen::VectorXd state = Eigen::VectorXd::Zero(20);
    state.segment(10, 5).setConstant(100.0);
    state.segment(15, 5).setConstant(5.0);
    const Eigen::VectorXd drift = ekspf::shear_frame_drift(state, 0.0, params);
    EXPECT_TRUE(drift.segment(0, 5).isZero(0.0));
    EXPECT_TRUE(drift.segment(5, 5).isApprox(Eigen::VectorXd::Constant(5, 30.0)));
    EXPECT_TRUE(drift.segment(10, 10).isZero(0.0));
}

TEST(ShearFrameDrift, SingleFloorRestoringForce) {
    ShearFrameParams params;
    params.n_floors = 1;
    params.k_true = Eigen::VectorXd::Constant(1, 100.0);
    params.c_true = Eigen::VectorXd::Constant(1, 5.0);
    params.f0 = 0.0;
    Eigen::VectorXd state(4);
    state << 1.0, 0.0, 100.0, 5.0;
    const Eigen::VectorXd drift = ekspf::shear_frame_drift(state, 0.0, params);
    EXPECT_DOUBLE_EQ(drift[0], 0.0);
    EXPECT_DOUBLE_EQ(drift[1], -100.0);
    EXPECT_DOUBLE_EQ(drift[2], 0.0);
    EXPECT_DOUBLE_EQ(drift[3], 0.0);
}

TEST(ShearFrameDrift, RejectsWrongStateSize) {
    ShearFrameParams params;
    EXPECT_THROW(ekspf::shear_frame_drift(Eigen::VectorXd::Zero(10), 0.0, params),
                 std::invalid_argument);
}

TEST(ShearFrameParamsChecks, RejectsNonPositiveCoefficients) {
    ShearFrameParams params;
    params.k_true[2] = 0.0;
    EXPECT_THROW(params.validate(), std::invalid_argument);
    params = ShearFrameParams{};
    params.c_true[0] = -1.0;
    EXPECT_THROW(params.validate(), std::invalid_argument);
    params = ShearFrameParams{};
    params.n_floors = 3;
    EXPECT_THROW(params.validate(), std::invalid_argument);
}

TEST(ShearFrameIntensity, UsesDisplacementModulus) {
    const ekspf::IntensityModel model = ekspf::shear_frame_intensity(2, 1e3);
    Eigen::VectorXd state(8);
    state << -0.2, 0.5, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0;
    const Eigen::VectorXd rate = model.rate(0.0, state);
    EXPECT_DOUBLE_EQ(rate[0], 200.0);
    EXPECT_DOUBLE_EQ(rate[1], 500.0);
    EXPECT_THROW(ekspf::shear_frame_intensity(0, 1.0), std::invalid_argument);
    EXPECT_THROW(ekspf::shear_frame_intensity(2, 0.0), std::invalid_argument);
}

TEST(DuffingDrift, EquilibriumAndSpringForce) {
    DuffingControlProblem p;
    p.f0 = 0.0;
    p.xg0 = 0.0;
    p.d = 0.0;
    EXPECT_TRUE(ekspf::duffing_drift(Eigen::Vector2d::Zero(), 0.0, 0.0, p).isZero(0.0));
    const Eigen::Vector2d linear = ekspf::duffing_drift(Eigen::Vector2d(1.0, 0.0), 0.0, 0.0, p);
    EXPECT_DOUBLE_EQ(linear[0], 0.0);
    EXPECT_DOUBLE_EQ(linear[1], -100.0);
    p.d = 2.0;
    const Eigen::Vector2d cubic = ekspf::duffing_drift(Eigen::Vector2d(1.0, 0.0), 0.0, 0.0, p);
    EXPECT_DOUBLE_EQ(cubic[1], -102.0);
}

TEST(DuffingDrift, AffineInControlWithUnitCoefficient) {
    DuffingControlProblem p;
    // At integer-valued states and t = 0 every term is exactly representable,
    // so the unit coefficient on u holds bit for bit.
    const Eigen::Vector2d x_int(1.0, 2.0);
    const Eigen::Vector2d exact =
        ekspf::duffing_drift(x_int, 7.0, 0.0, p) - ekspf::duffing_drift(x_int, 0.0, 0.0, p);
    EXPECT_DOUBLE_EQ(exact[0], 0.0);
    EXPECT_DOUBLE_EQ(exact[1], 7.0);

    // At arbitrary states the identity (a + u) - a = u only holds up to
    // cancellation roundoff scaled by the size of the u-free drift terms.
    std::mt19937_64 rng(17);
    std::normal_distribution<double> dist(0.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector2d x(dist(rng), dist(rng));
        const double t = std::abs(dist(rng));
        const double u = dist(rng);
        const Eigen::Vector2d with_u = ekspf::duffing_drift(x, u, t, p);
        const Eigen::Vector2d without = ekspf::duffing_drift(x, 0.0, t, p);
        const double scale = std::max({1.0, std::abs(with_u[1]), std::abs(without[1])});
        EXPECT_DOUBLE_EQ(with_u[0] - without[0], 0.0);
        EXPECT_NEAR(with_u[1] - without[1], u, 1e-11 * scale);
    }
}

TEST(PerformanceIndex, HandValuesAndNonNegativity) {
    EXPECT_DOUBLE_EQ(ekspf::performance_index(Eigen::Vector2d::Zero(), 0.0,
                                              Eigen::Matrix2d::Identity(), 0.0),
                     0.0);
    EXPECT_DOUBLE_EQ(ekspf::performance_index(Eigen::Vector2d(3.0, 4.0), 0.0,
                                              Eigen::Matrix2d::Identity(), 0.0),
                     25.0);
    const Eigen::Matrix2d r = Eigen::Vector2d(2.0, 1.0).asDiagonal();
    EXPECT_DOUBLE_EQ(ekspf::performance_index(Eigen::Vector2d(1.0, 1.0), 2.0, r, 3.0), 15.0);

    std::mt19937_64 rng(23);
    std::normal_distribution<double> dist(0.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        const Eigen::Vector2d x(dist(rng), dist(rng));
        EXPECT_GE(ekspf::performance_index(x, dist(rng), Eigen::Matrix2d::Identity(), 0.3), 0.0);
    }
}

TEST(DuffingProblemChecks, RejectsBadWeightsAndIterations) {
    DuffingControlProblem p;
    p.weight_s = -1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = DuffingControlProblem{};
    p.inner_iterations = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = DuffingControlProblem{};
    p.weight_r << 1.0, 0.0, 0.0, -1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = DuffingControlProblem{};
    p.weight_r << 1.0, 2.0, 0.0, 1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}

}  // namespace
