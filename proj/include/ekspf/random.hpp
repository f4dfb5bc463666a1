#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include <Eigen/Dense>

namespace ekspf {

// Stream ids for the independent noise sources used across the library.
// Keeping them fixed means changing one consumer never perturbs another's draws.
namespace streams {
inline constexpr std::uint64_t kInitialEnsemble = 0x01;
inline constexpr std::uint64_t kProcessNoise = 0x02;
inline constexpr std::uint64_t kMeasurementNoise = 0x03;
inline constexpr std::uint64_t kVirtualCounts = 0x04;
inline constexpr std::uint64_t kResampling = 0x05;
inline constexpr std::uint64_t kControlWalk = 0x06;
inline constexpr std::uint64_t kTruth = 0x07;
inline constexpr std::uint64_t kRecordNoise = 0x08;
}  // namespace streams

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// A (seed, stream_id) pair identifying one reproducible random stream.
///
/// Same pair -> bit-identical draw sequence; distinct stream ids -> generators
/// with unrelated internal state. Sub-streams are derived by hashing, so any
/// consumer can fan out (per channel, per step, per run) without coordination.
struct RandomSource {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    RandomSource substream(std::uint64_t k) const {
        return {seed, splitmix64(stream_id ^ splitmix64(k ^ 0x632be59bd9b4e019ULL))};
    }

    std::mt19937_64 engine() const {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
        return std::mt19937_64(seq);
    }
};

/// Uniform draw from the open interval (0, 1); log(u) stays finite.
inline double uniform_open01(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    double u = dist(rng);
    while (u <= 0.0) u = dist(rng);
    return u;
}

inline double standard_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

/// n independent Brownian increments over a step of length dt: N(0, dt) each.
inline Eigen::VectorXd brownian_increments(const RandomSource& source, Eigen::Index n, double dt) {
    if (n < 0) throw std::invalid_argument("brownian_increments: n must be non-negative");
    if (!(dt >= 0.0)) throw std::invalid_argument("brownian_increments: dt must be non-negative");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    if (dt == 0.0 || n == 0) return out;
    auto rng = source.engine();
    const double scale = std::sqrt(dt);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = scale * standard_normal(rng);
    return out;
}

/// Matrix of Brownian increments, rows x cols, all N(0, dt), one stream.
/// Filled column by column so per-column consumers see a fixed slice of the stream.
inline Eigen::MatrixXd brownian_increment_matrix(const RandomSource& source, Eigen::Index rows,
                                                 Eigen::Index cols, double dt) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("brownian_increment_matrix: negative shape");
    if (!(dt >= 0.0)) throw std::invalid_argument("brownian_increment_matrix: dt must be non-negative");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, cols);
    if (dt == 0.0) return out;
    auto rng = source.engine();
    const double scale = std::sqrt(dt);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = scale * standard_normal(rng);
    return out;
}

}  // namespace ekspf
