#pragma once

// Initial conditions for trajectory ensembles.
//
// The initial nuclear packet is chi(R) ~ exp(-(R-Rc)^2 / (2 sigma^2)) exp(i k0 R),
// so |chi|^2 ~ exp(-(R-Rc)^2 / sigma^2). Its Wigner function is the product
// of two Gaussians:
//   position std  = sigma / sqrt(2)
//   momentum std  = hbar / (sigma sqrt(2))
// and position and momentum samples are independent.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "nonadiab/error.hpp"

namespace nonadiab {

/// Independent random streams per (seed, trajectory index, purpose). Draws of
/// trajectory I never depend on how many workers run or in which order.
enum class StreamPurpose : std::uint32_t { InitialConditions = 1, Hopping = 2 };

inline std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t index, StreamPurpose purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq);
}

/// Uniform double in [0, 1) from the top 53 bits; fixed across platforms.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Box-Muller pair of standard normals. std::normal_distribution is not
/// specified bit-for-bit across standard libraries.
inline std::array<double, 2> standard_normal_pair(std::mt19937_64& rng) {
    const double u1 = 1.0 - uniform01(rng);  // (0, 1]
    const double u2 = uniform01(rng);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

struct InitialConditions {
    std::vector<double> positions;
    std::vector<double> momenta;
    std::size_t initial_state = 0;
    std::vector<double> weights;
    std::uint64_t seed = 0;

    std::size_t size() const { return positions.size(); }
};

struct PacketShape {
    double center = 0.0;
    double momentum = 0.0;  // hbar k0
    double sigma = 1.0;     // width parameter, |chi|^2 ~ exp(-(R-Rc)^2/sigma^2)
};

inline double position_std(const PacketShape& p) { return p.sigma / std::numbers::sqrt2; }
inline double momentum_std(const PacketShape& p) { return 1.0 / (p.sigma * std::numbers::sqrt2); }

namespace detail {
inline InitialConditions sample(const PacketShape& packet, std::size_t n_traj, std::uint64_t seed,
                                std::size_t state, bool wigner_momenta) {
    if (!(packet.sigma > 0.0)) throw ConfigError("packet sigma must be > 0");
    if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
    InitialConditions ic;
    ic.positions.resize(n_traj);
    ic.momenta.resize(n_traj);
    ic.weights.assign(n_traj, 1.0 / static_cast<double>(n_traj));
    ic.initial_state = state;
    ic.seed = seed;
    const double sx = position_std(packet);
    const double sp = momentum_std(packet);
    for (std::size_t i = 0; i < n_traj; ++i) {
        auto rng = make_stream(seed, i, StreamPurpose::InitialConditions);
        const auto z = standard_normal_pair(rng);
        ic.positions[i] = packet.center + sx * z[0];
        ic.momenta[i] = wigner_momenta ? packet.momentum + sp * z[1] : packet.momentum;
    }
    return ic;
}
}  // namespace detail

/// Positions and momenta drawn from the Wigner distribution of the packet.
inline InitialConditions sample_wigner(const PacketShape& packet, std::size_t n_traj, std::uint64_t seed,
                                       std::size_t state = 0) {
    return detail::sample(packet, n_traj, seed, state, true);
}

/// Positions from |chi|^2, every momentum set to hbar k0.
inline InitialConditions sample_fixed_momentum(const PacketShape& packet, std::size_t n_traj,
                                               std::uint64_t seed, std::size_t state = 0) {
    return detail::sample(packet, n_traj, seed, state, false);
}

}  // namespace nonadiab
