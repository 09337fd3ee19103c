#pragma once

// Coupled-trajectory mixed quantum-classical engine.
//
// Each gather collects {R, rho_ll, f_l} from all trajectories, fits one Gaussian
// per BO-projected density, and builds a quantum momentum that is linear in
// R between the Gaussian centers:
//
//   qm^(I) = alpha^(I) (R^(I) - R0),   alpha^(I) = hbar sum_l |C_l^(I)|^2 / sigma_l^2
//
// The intercept R0 is fixed by demanding zero net population transfer when
// the NACVs vanish. Because alpha^(I) is evaluated per trajectory, R0 is the
// alpha-weighted average over the set S of trajectories that carry a quantum
// momentum:
//
//   R0 = sum_S alpha w R / sum_S alpha w,   w = rho_11 rho_22 (f_1 - f_2).
//
// With alpha uniform this is the plain w-weighted average. When sum alpha w
// passes through zero R0 runs off to infinity; an intercept outside the span
// of the contributing positions disengages the quantum momentum for that
// evaluation, like the denominator floor.
//
// S is every trajectory by default. QuantumMomentumRegion::BetweenCenters
// restricts S to [min center, max center] and zeroes qm elsewhere. Under
// mean-field forces the two weighted centers stay within a fraction of a
// bohr of each other until the states have separated, so that interval is
// nearly empty and the cut run stays close to Ehrenfest.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nonadiab/error.hpp"
#include "nonadiab/parallel.hpp"
#include "nonadiab/trajectory.hpp"

namespace nonadiab {

enum class QuantumMomentumRegion { AllTrajectories, BetweenCenters };

inline std::string_view to_string(QuantumMomentumRegion region) {
    return region == QuantumMomentumRegion::AllTrajectories ? "all" : "centers";
}

inline QuantumMomentumRegion quantum_momentum_region_from_string(std::string_view name) {
    if (name == "all") return QuantumMomentumRegion::AllTrajectories;
    if (name == "centers") return QuantumMomentumRegion::BetweenCenters;
    throw ConfigError("unknown quantum momentum region '" + std::string(name) + "' (all|centers)");
}

struct QuantumMomentumOptions {
    double population_floor = 1e-8;  // state "active" above this ensemble population
    double weight_floor = 1e-10;     // intercept denominator floor
    double width_floor = 1e-8;       // sigma_l^2 below this drops state l from the slope
    double variance_scale = 2.0;     // sigma_l^2 = variance_scale x weighted variance
    QuantumMomentumRegion region = QuantumMomentumRegion::AllTrajectories;
};

/// Population-weighted Gaussian fit of each BO-projected density.
/// width2 follows the exp(-(R-R_l)^2/sigma_l^2) convention: sigma_l^2 = 2 x variance.
template <std::size_t N>
struct GaussianMoments {
    std::array<bool, N> active{};
    StateArray<N> population{};  // ensemble rho_ll
    StateArray<N> center{};
    StateArray<N> width2{};
};

/// Gathered per-step view of the ensemble.
template <std::size_t N>
struct EnsembleFrame {
    std::vector<double> position;
    std::vector<StateArray<N>> rho;
    std::vector<StateArray<N>> f;

    std::size_t size() const { return position.size(); }

    static EnsembleFrame gather(std::span<const TrajectoryState<N>> trajectories) {
        EnsembleFrame frame;
        frame.position.reserve(trajectories.size());
        frame.rho.reserve(trajectories.size());
        frame.f.reserve(trajectories.size());
        for (const auto& s : trajectories) {
            frame.position.push_back(s.position);
            StateArray<N> rho{};
            for (std::size_t l = 0; l < N; ++l) rho[l] = s.population(l);
            frame.rho.push_back(rho);
            frame.f.push_back(s.adiabatic_force);
        }
        return frame;
    }
};

template <std::size_t N>
GaussianMoments<N> gaussian_moments(const EnsembleFrame<N>& frame, const QuantumMomentumOptions& options = {}) {
    GaussianMoments<N> m;
    const std::size_t n = frame.size();
    if (n == 0) return m;
    for (std::size_t l = 0; l < N; ++l) {
        double total = 0.0;
        double first = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            total += frame.rho[i][l];
            first += frame.rho[i][l] * frame.position[i];
        }
        m.population[l] = total / static_cast<double>(n);
        m.active[l] = m.population[l] > options.population_floor;
        if (!m.active[l]) continue;
        m.center[l] = first / total;
        double second = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = frame.position[i] - m.center[l];
            second += frame.rho[i][l] * x * x;
        }
        m.width2[l] = options.variance_scale * second / total;
    }
    return m;
}

struct QuantumMomentumResult {
    GaussianMoments<2> moments;
    bool engaged = false;  // false: qm == 0 for every trajectory
    double intercept = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> momentum;
};

/// Two-state quantum momentum for every trajectory of the frame.
inline QuantumMomentumResult quantum_momentum(const EnsembleFrame<2>& frame, const QuantumMomentumOptions& options = {}) {
    QuantumMomentumResult out;
    const std::size_t n = frame.size();
    out.momentum.assign(n, 0.0);
    out.moments = gaussian_moments(frame, options);
    const auto& m = out.moments;
    if (!m.active[0] || !m.active[1]) return out;

    const double lo = std::min(m.center[0], m.center[1]);
    const double hi = std::max(m.center[0], m.center[1]);
    const bool cut = options.region == QuantumMomentumRegion::BetweenCenters;
    const auto outside = [&](double r) { return cut && (r < lo || r > hi); };
    std::vector<double> slope(n, 0.0);
    double numerator = 0.0;
    double denominator = 0.0;
    double max_slope = 0.0;
    double r_lo = std::numeric_limits<double>::infinity();
    double r_hi = -r_lo;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = frame.position[i];
        if (outside(r)) continue;
        r_lo = std::min(r_lo, r);
        r_hi = std::max(r_hi, r);
        double alpha = 0.0;
        for (std::size_t l = 0; l < 2; ++l) {
            if (m.width2[l] >= options.width_floor) alpha += frame.rho[i][l] / m.width2[l];
        }
        slope[i] = alpha;
        const double w = frame.rho[i][0] * frame.rho[i][1] * (frame.f[i][0] - frame.f[i][1]);
        numerator += alpha * w * r;
        denominator += alpha * w;
        max_slope = std::max(max_slope, alpha);
    }
    if (!(std::abs(denominator) >= options.weight_floor * max_slope) || max_slope == 0.0) return out;
    const double r0 = numerator / denominator;
    if (!(r0 >= r_lo && r0 <= r_hi)) return out;
    out.intercept = r0;
    out.engaged = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = frame.position[i];
        if (outside(r)) continue;
        out.momentum[i] = slope[i] * (r - out.intercept);
    }
    return out;
}

template <std::size_t N>
struct PairwiseQuantumMomentumResult {
    GaussianMoments<N> moments;
    StateMatrix<N> intercept{};
    std::array<std::array<bool, N>, N> engaged{};
    std::vector<LocalQuantumMomentum<N>> momentum;  // per trajectory, symmetric pair matrix
};

/// Multi-level quantum momentum as a sum of two-state contributions: for
/// each pair (l, k) a slope from the pair's Gaussians and an intercept
///   R0_lk = sum_S alpha W R / sum_S alpha W,  W = (rho_ll + rho_kk) rho_ll rho_kk (f_k - f_l),
/// over the pair's region set. Inactive pairs are zero.
template <std::size_t N>
PairwiseQuantumMomentumResult<N> multi_level_quantum_momentum(const EnsembleFrame<N>& frame,
                                                              const QuantumMomentumOptions& options = {}) {
    PairwiseQuantumMomentumResult<N> out;
    const std::size_t n = frame.size();
    out.momentum.assign(n, LocalQuantumMomentum<N>{});
    out.moments = gaussian_moments(frame, options);
    const auto& m = out.moments;
    const auto active = static_cast<std::size_t>(std::ranges::count(m.active, true));
    for (auto& q : out.momentum) q.active_states = active;
    std::vector<double> slope(n);
    for (std::size_t l = 0; l < N; ++l) {
        for (std::size_t k = l + 1; k < N; ++k) {
            if (!m.active[l] || !m.active[k]) continue;
            const double lo = std::min(m.center[l], m.center[k]);
            const double hi = std::max(m.center[l], m.center[k]);
            const bool cut = options.region == QuantumMomentumRegion::BetweenCenters;
            double numerator = 0.0;
            double denominator = 0.0;
            double max_slope = 0.0;
            double r_lo = std::numeric_limits<double>::infinity();
            double r_hi = -r_lo;
            for (std::size_t i = 0; i < n; ++i) {
                slope[i] = 0.0;
                const double r = frame.position[i];
                if (cut && (r < lo || r > hi)) continue;
                const double pair_population = frame.rho[i][l] + frame.rho[i][k];
                if (pair_population <= 0.0) continue;
                r_lo = std::min(r_lo, r);
                r_hi = std::max(r_hi, r);
                double alpha = 0.0;
                if (m.width2[l] >= options.width_floor) alpha += frame.rho[i][l] / m.width2[l];
                if (m.width2[k] >= options.width_floor) alpha += frame.rho[i][k] / m.width2[k];
                alpha /= pair_population;
                slope[i] = alpha;
                const double w = pair_population * frame.rho[i][l] * frame.rho[i][k] * (frame.f[i][k] - frame.f[i][l]);
                numerator += alpha * w * r;
                denominator += alpha * w;
                max_slope = std::max(max_slope, alpha);
            }
            if (!(std::abs(denominator) >= options.weight_floor * max_slope) || max_slope == 0.0) continue;
            const double r0 = numerator / denominator;
            if (!(r0 >= r_lo && r0 <= r_hi)) continue;
            out.intercept[l][k] = out.intercept[k][l] = r0;
            out.engaged[l][k] = out.engaged[k][l] = true;
            for (std::size_t i = 0; i < n; ++i) {
                if (slope[i] == 0.0) continue;
                const double value = slope[i] * (frame.position[i] - r0);
                out.momentum[i].pair[l][k] = out.momentum[i].pair[k][l] = value;
            }
        }
    }
    return out;
}

struct CtmqcOptions {
    double dt = 0.5;
    bool decoherence = true;  // false: quantum momentum forced to zero (Ehrenfest limit)
    QuantumMomentumOptions quantum_momentum{};
};

/// Trajectory ensemble advanced in lock step. Per-trajectory work runs on the
/// worker pool; the gather and all reductions run in trajectory-index order.
template <class Provider>
class CtmqcEnsemble {
public:
    static constexpr std::size_t N = Provider::states;
    using State = TrajectoryState<N>;

    CtmqcEnsemble(Provider provider, std::vector<State> trajectories, CtmqcOptions options)
        : provider_(std::move(provider)), trajectories_(std::move(trajectories)), options_(options) {
        if (!(options_.dt > 0.0)) throw ConfigError("dt must be > 0");
        if (trajectories_.empty()) throw ConfigError("ensemble needs at least one trajectory");
        local_qm_.assign(trajectories_.size(), LocalQuantumMomentum<N>{});
    }

    const std::vector<State>& trajectories() const { return trajectories_; }
    std::vector<State>& trajectories() { return trajectories_; }
    const Provider& provider() const { return provider_; }
    double time() const { return time_; }
    std::size_t steps() const { return steps_; }
    const CtmqcOptions& options() const { return options_; }

    /// Quantum momentum at the current ensemble state (per trajectory).
    const std::vector<LocalQuantumMomentum<N>>& last_quantum_momentum() const { return local_qm_; }

    /// Refreshes the quantum momentum from the current positions,
    /// populations and f without stepping.
    void gather() {
        if (!options_.decoherence) {
            std::ranges::fill(local_qm_, LocalQuantumMomentum<N>{});
            return;
        }
        assign(EnsembleFrame<N>::gather(trajectories_), local_qm_);
    }

    /// Velocity Verlet for the nuclei. The coefficients are split as
    /// D(dt/2) E(dt) D(dt/2): E is the RK4 step without the decoherence term,
    /// D integrates the decoherence term on the populations of the whole
    /// ensemble with the quantum momentum rebuilt at every stage. D only
    /// rescales |C_l|, and every stage rate sums to zero over the ensemble when
    /// the NACVs vanish, so the ensemble populations are kept to roundoff.
    /// With qm == 0 D is the identity and the step is the Ehrenfest step.
    void step(WorkerPool& pool) {
        const double dt = options_.dt;
        const double mass = provider_.mass();
        const std::size_t n = trajectories_.size();
        gather();
        if (!options_.decoherence) {
            pool.parallel_for(n, [&](std::size_t i) { coupled_step(trajectories_[i], provider_, local_qm_[i], dt); });
        } else {
            drift_.resize(n);
            pool.parallel_for(n, [&](std::size_t i) {
                auto& s = trajectories_[i];
                auto& d = drift_[i];
                d.momentum = s.momentum + 0.5 * dt * ctmqc_force(s, local_qm_[i], mass);
                d.position = s.position + dt * d.momentum / mass;
                d.bo = provider_(d.position, &s.bo);
                d.f = accumulate_adiabatic_force(s.adiabatic_force, s.bo.gradient, d.bo.gradient, dt);
            });
            decohere(0.5 * dt);
            pool.parallel_for(n, [&](std::size_t i) {
                auto& s = trajectories_[i];
                auto& d = drift_[i];
                s.coeff = propagate_coefficients(s.coeff, s.bo, d.bo, d.momentum / mass, s.adiabatic_force, d.f,
                                                 LocalQuantumMomentum<N>{}, mass, dt);
                s.position = d.position;
                s.bo = d.bo;
                s.adiabatic_force = d.f;
                s.momentum = d.momentum;
            });
            decohere(0.5 * dt);
            gather();
            pool.parallel_for(n, [&](std::size_t i) {
                auto& s = trajectories_[i];
                s.momentum = s.momentum + 0.5 * dt * ctmqc_force(s, local_qm_[i], mass);
            });
        }
        ++steps_;
        time_ = static_cast<double>(steps_) * dt;
        for (std::size_t i = 0; i < trajectories_.size(); ++i) {
            if (!is_finite(trajectories_[i])) {
                throw NumericalAbort("non-finite state in trajectory " + std::to_string(i) + " at step " +
                                     std::to_string(steps_));
            }
        }
    }

    double max_gauge_residual() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < trajectories_.size(); ++i) {
            worst = std::max(worst, gauge_residual(trajectories_[i], local_qm_[i], provider_.mass()));
        }
        return worst;
    }

private:
    struct Drift {
        double position = 0.0;
        double momentum = 0.0;  // half-kicked
        AdiabaticPoint<N> bo{};
        StateArray<N> f{};
    };

    /// RK4 over h for d rho_l/dt = -2 Q_l rho_l / M at fixed R and f; each
    /// coefficient keeps its phase and is rescaled to the new population.
    void decohere(double h) {
        const std::size_t n = trajectories_.size();
        const double mass = provider_.mass();
        EnsembleFrame<N> frame = EnsembleFrame<N>::gather(trajectories_);
        const std::vector<StateArray<N>> rho0 = frame.rho;
        std::vector<LocalQuantumMomentum<N>> qm(n);
        constexpr std::array<double, 4> kOffset{0.0, 0.5, 0.5, 1.0};
        std::array<std::vector<StateArray<N>>, 4> k;
        for (std::size_t j = 0; j < 4; ++j) {
            if (j > 0) {
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t l = 0; l < N; ++l) frame.rho[i][l] = rho0[i][l] + kOffset[j] * h * k[j - 1][i][l];
            }
            assign(frame, qm);
            k[j].resize(n);
            for (std::size_t i = 0; i < n; ++i) k[j][i] = decoherence_rate(frame.rho[i], frame.f[i], qm[i], mass);
        }
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = trajectories_[i];
            for (std::size_t l = 0; l < N; ++l) {
                const double delta = h / 6.0 * (k[0][i][l] + 2.0 * k[1][i][l] + 2.0 * k[2][i][l] + k[3][i][l]);
                if (delta == 0.0) continue;
                const double rho = rho0[i][l] + delta;
                if (!(rho >= 0.0)) {
                    throw NumericalAbort("decoherence step drove a population negative in trajectory " +
                                         std::to_string(i) + "; reduce dt");
                }
                s.coeff[l] *= std::sqrt(rho / rho0[i][l]);
            }
        }
    }

    void assign(const EnsembleFrame<N>& frame, std::vector<LocalQuantumMomentum<N>>& out) const {
        if constexpr (N == 2) {
            const auto qm = quantum_momentum(frame, options_.quantum_momentum);
            for (std::size_t i = 0; i < frame.size(); ++i) out[i] = LocalQuantumMomentum<2>::two_state(qm.momentum[i]);
        } else {
            out = multi_level_quantum_momentum(frame, options_.quantum_momentum).momentum;
        }
    }

    Provider provider_;
    std::vector<State> trajectories_;
    CtmqcOptions options_;
    std::vector<LocalQuantumMomentum<N>> local_qm_;
    std::vector<Drift> drift_;
    double time_ = 0.0;
    std::size_t steps_ = 0;
};

}  // namespace nonadiab
