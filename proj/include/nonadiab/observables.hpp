#pragma once

// Ensemble estimators: populations, decoherence indicator, weighted
// histograms of the BO-projected densities, and channel classification.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "nonadiab/baselines.hpp"
#include "nonadiab/error.hpp"
#include "nonadiab/grid.hpp"
#include "nonadiab/trajectory.hpp"

namespace nonadiab {

/// Mean of rho_ll^(I) over trajectories.
template <std::size_t N>
StateArray<N> ensemble_populations(std::span<const TrajectoryState<N>> trajectories) {
    StateArray<N> pop{};
    for (const auto& s : trajectories)
        for (std::size_t l = 0; l < N; ++l) pop[l] += s.population(l);
    for (auto& p : pop) p /= static_cast<double>(trajectories.size());
    return pop;
}

/// Surface-hopping populations N_l / N_traj.
template <std::size_t N>
StateArray<N> surface_populations(std::span<const HopState> hops) {
    StateArray<N> pop{};
    for (const auto& h : hops) pop[h.active] += 1.0;
    for (auto& p : pop) p /= static_cast<double>(hops.size());
    return pop;
}

/// (1/N_traj) sum_I |C_1|^2 |C_2|^2 over the two lowest states.
template <std::size_t N>
double decoherence_indicator(std::span<const TrajectoryState<N>> trajectories) {
    double sum = 0.0;
    for (const auto& s : trajectories) sum += s.population(0) * s.population(1);
    return sum / static_cast<double>(trajectories.size());
}

struct DensityHistogram {
    std::vector<double> center;
    std::vector<double> density;                  // |chi|^2
    std::array<std::vector<double>, 2> bo_density;  // |F_l|^2
    double bin_width = 0.0;

    double total_mass() const {
        double s = 0.0;
        for (double d : density) s += d;
        return s * bin_width;
    }
};

inline constexpr double kDefaultBinWidth = 0.2;

/// Histogram of trajectory positions with weight rho_ll^(I)/(N_traj dR) per
/// state. Bins start at `r_min`; trajectories outside [r_min, r_max) are
/// dropped. Pass r_min >= r_max to size the range from the data.
template <std::size_t N>
DensityHistogram density_histogram(std::span<const TrajectoryState<N>> trajectories, double bin_width,
                                   double r_min = 0.0, double r_max = 0.0) {
    if (!(bin_width > 0.0)) throw ConfigError("histogram bin width must be > 0");
    if (trajectories.empty()) return {};
    if (!(r_max > r_min)) {
        const auto [lo, hi] = std::ranges::minmax(trajectories, {}, &TrajectoryState<N>::position);
        r_min = std::floor(lo.position / bin_width) * bin_width;
        r_max = r_min + (std::floor((hi.position - r_min) / bin_width) + 1.0) * bin_width;
    }
    const auto bins = static_cast<std::size_t>(std::ceil((r_max - r_min) / bin_width - 1e-9));
    DensityHistogram h;
    h.bin_width = bin_width;
    h.center.resize(bins);
    h.density.assign(bins, 0.0);
    h.bo_density[0].assign(bins, 0.0);
    h.bo_density[1].assign(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) h.center[b] = r_min + (static_cast<double>(b) + 0.5) * bin_width;
    const double scale = 1.0 / (static_cast<double>(trajectories.size()) * bin_width);
    for (const auto& s : trajectories) {
        const double x = (s.position - r_min) / bin_width;
        if (x < 0.0 || x >= static_cast<double>(bins)) continue;
        const auto b = static_cast<std::size_t>(x);
        h.bo_density[0][b] += s.population(0) * scale;
        h.bo_density[1][b] += s.population(1) * scale;
    }
    for (std::size_t b = 0; b < bins; ++b) h.density[b] = h.bo_density[0][b] + h.bo_density[1][b];
    return h;
}

/// Coefficient-weighted channel probabilities; unsettled if any trajectory
/// sits within 1 bohr of R_split.
template <std::size_t N>
ChannelProbabilities classify_channels(std::span<const TrajectoryState<N>> trajectories, double r_split = 0.0) {
    ChannelProbabilities out;
    const double w = 1.0 / static_cast<double>(trajectories.size());
    for (const auto& s : trajectories) {
        if (s.position >= r_split) {
            out.t1 += w * s.population(0);
            out.t2 += w * s.population(1);
        } else {
            out.r1 += w * s.population(0);
            out.r2 += w * s.population(1);
        }
        if (std::abs(s.position - r_split) < 1.0) out.unsettled = true;
    }
    return out;
}

/// Surface-hopping channels from (active surface, side) counts.
template <std::size_t N>
ChannelProbabilities classify_channels(std::span<const TrajectoryState<N>> trajectories, std::span<const HopState> hops,
                                       double r_split = 0.0) {
    ChannelProbabilities out;
    const double w = 1.0 / static_cast<double>(trajectories.size());
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const bool transmitted = trajectories[i].position >= r_split;
        const bool lower = hops[i].active == 0;
        (transmitted ? (lower ? out.t1 : out.t2) : (lower ? out.r1 : out.r2)) += w;
        if (std::abs(trajectories[i].position - r_split) < 1.0) out.unsettled = true;
    }
    return out;
}

/// sum_l rho_ll eps_l for one trajectory: the electronic-energy term of the
/// trajectory approximation to the TDPES.
template <std::size_t N>
double trajectory_tdpes(const TrajectoryState<N>& s) {
    double e = 0.0;
    for (std::size_t l = 0; l < N; ++l) e += s.population(l) * s.bo.energy[l];
    return e;
}

struct TdpesDeviation {
    double rms = 0.0;
    double max_abs = 0.0;
    std::size_t samples = 0;  // trajectories inside the mask
};

/// Deviation of per-trajectory TDPES values from the exact eps_GI, linearly
/// interpolated on the grid. Trajectories whose bracketing grid points are
/// not both inside the density mask are skipped.
inline TdpesDeviation tdpes_deviation(const GaugeInvariantTdpes& exact, const Grid& grid,
                                      std::span<const double> positions, std::span<const double> values) {
    TdpesDeviation out;
    double sum2 = 0.0;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const double x = (positions[i] - grid.r_min) / grid.spacing();
        if (x < 0.0 || x >= static_cast<double>(grid.points - 1)) continue;
        const auto j = static_cast<std::size_t>(x);
        if (!exact.mask[j] || !exact.mask[j + 1]) continue;
        const double w = x - static_cast<double>(j);
        const double reference = (1.0 - w) * exact.value[j] + w * exact.value[j + 1];
        const double diff = values[i] - reference;
        sum2 += diff * diff;
        out.max_abs = std::max(out.max_abs, std::abs(diff));
        ++out.samples;
    }
    if (out.samples > 0) out.rms = std::sqrt(sum2 / static_cast<double>(out.samples));
    return out;
}

}  // namespace nonadiab
