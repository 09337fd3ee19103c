#pragma once

// Per-trajectory quantum-classical equations of motion shared by CT-MQC and
// the independent-trajectory baselines. One nuclear degree of freedom,
// N adiabatic states, hbar = 1.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>

#include "nonadiab/error.hpp"
#include "nonadiab/models.hpp"

namespace nonadiab {

using cplx = std::complex<double>;

template <std::size_t N>
using StateArray = std::array<double, N>;

template <std::size_t N>
using StateMatrix = std::array<std::array<double, N>, N>;

/// Electronic structure for the two-state diabatic models.
struct ModelElectronicStructure {
    static constexpr std::size_t states = 2;
    DiabaticModel model;

    double mass() const { return model.mass; }
    AdiabaticPoint<2> operator()(double R, const AdiabaticPoint<2>* previous) const {
        return adiabatic_point(model, R, previous);
    }
};

/// A two-state model padded with uncoupled spectator states.
template <std::size_t N>
struct EmbeddedElectronicStructure {
    static constexpr std::size_t states = N;
    DiabaticModel model;
    std::array<double, N - 2> extra_energies{};

    double mass() const { return model.mass; }
    AdiabaticPoint<N> operator()(double R, const AdiabaticPoint<N>* previous) const {
        AdiabaticPoint<2> prev2;
        if (previous) {
            for (std::size_t l = 0; l < 2; ++l)
                for (std::size_t k = 0; k < 2; ++k) prev2.vectors[l][k] = previous->vectors[l][k];
        }
        return embed<N>(adiabatic_point(model, R, previous ? &prev2 : nullptr), extra_energies);
    }
};

/// Wraps a provider and zeroes every NACV; used to check that population
/// transfer is driven by the couplings alone.
template <class Provider>
struct UncoupledElectronicStructure {
    static constexpr std::size_t states = Provider::states;
    Provider inner;

    double mass() const { return inner.mass(); }
    AdiabaticPoint<states> operator()(double R, const AdiabaticPoint<states>* previous) const {
        auto p = inner(R, previous);
        for (auto& row : p.nacv) row.fill(0.0);
        return p;
    }
};

template <std::size_t N>
struct TrajectoryState {
    double position = 0.0;
    double momentum = 0.0;
    std::array<cplx, N> coeff{};
    StateArray<N> adiabatic_force{};  // f_l, time-integrated -d(eps_l)/dR
    AdiabaticPoint<N> bo{};           // cached at `position`

    double population(std::size_t l) const { return std::norm(coeff[l]); }
    double norm() const {
        double s = 0.0;
        for (const auto& c : coeff) s += std::norm(c);
        return s;
    }
};

/// Frozen per-step quantum momentum seen by one trajectory. pair[l][k] is the
/// pairwise quantum momentum of states (l, k); with two states pair[0][1] is
/// the usual scalar quantum momentum.
template <std::size_t N>
struct LocalQuantumMomentum {
    StateMatrix<N> pair{};
    std::size_t active_states = N;  // states with ensemble population; sets the 1/(N-1) pair prefactor

    double scalar() const
        requires(N == 2)
    {
        return pair[0][1];
    }
    static LocalQuantumMomentum two_state(double value)
        requires(N == 2)
    {
        LocalQuantumMomentum q;
        q.pair[0][1] = q.pair[1][0] = value;
        return q;
    }
};

/// Q_l, the quantum-momentum projection multiplying C_l in the decoherence
/// term of the electronic equation (and weighting the nuclear correction).
/// Two states: Q_l = qm * (sum_k |C_k|^2 f_k - f_l).
/// N states: pairwise sum (1/(n-1)) sum_k qm_lk (rho_ll + rho_kk) rho_kk (f_k - f_l),
/// n the number of active states, so empty states leave the result unchanged.
template <std::size_t N>
StateArray<N> decoherence_projection(const StateArray<N>& rho, const StateArray<N>& f, const LocalQuantumMomentum<N>& qm) {
    StateArray<N> q{};
    if constexpr (N == 2) {
        const double mean_force = rho[0] * f[0] + rho[1] * f[1];
        q[0] = qm.scalar() * (mean_force - f[0]);
        q[1] = qm.scalar() * (mean_force - f[1]);
    } else {
        const std::size_t n = std::clamp<std::size_t>(qm.active_states, 2, N);
        const double prefactor = 1.0 / static_cast<double>(n - 1);
        for (std::size_t l = 0; l < N; ++l) {
            double sum = 0.0;
            for (std::size_t k = 0; k < N; ++k) {
                if (k == l) continue;
                sum += qm.pair[l][k] * (rho[l] + rho[k]) * rho[k] * (f[k] - f[l]);
            }
            q[l] = prefactor * sum;
        }
    }
    return q;
}

template <std::size_t N>
StateArray<N> decoherence_projection(const std::array<cplx, N>& coeff, const StateArray<N>& f,
                                     const LocalQuantumMomentum<N>& qm) {
    StateArray<N> rho{};
    for (std::size_t l = 0; l < N; ++l) rho[l] = std::norm(coeff[l]);
    return decoherence_projection(rho, f, qm);
}

/// Population rate of the decoherence term alone, d rho_l/dt = -2 Q_l rho_l / (hbar M).
template <std::size_t N>
StateArray<N> decoherence_rate(const StateArray<N>& rho, const StateArray<N>& f, const LocalQuantumMomentum<N>& qm,
                               double mass) {
    const StateArray<N> q = decoherence_projection(rho, f, qm);
    StateArray<N> out{};
    for (std::size_t l = 0; l < N; ++l) out[l] = -2.0 * q[l] * rho[l] / mass;
    return out;
}

/// dC_l/dt = -i eps_l C_l - sum_k C_k v d_lk - Q_l C_l / (hbar M).
template <std::size_t N>
std::array<cplx, N> electronic_rhs(const std::array<cplx, N>& coeff, const StateArray<N>& energy,
                                   const StateMatrix<N>& nacv, double velocity, const StateArray<N>& f,
                                   const LocalQuantumMomentum<N>& qm, double mass) {
    const StateArray<N> q = decoherence_projection(coeff, f, qm);
    std::array<cplx, N> out{};
    for (std::size_t l = 0; l < N; ++l) {
        cplx coupling{};
        for (std::size_t k = 0; k < N; ++k) coupling += coeff[k] * nacv[l][k];
        out[l] = cplx{0.0, -energy[l]} * coeff[l] - velocity * coupling - (q[l] / mass) * coeff[l];
    }
    return out;
}

/// Ehrenfest part of the force: -sum_k rho_kk eps_k' - sum_kl Re(rho_lk)(eps_k - eps_l) d_lk.
template <std::size_t N>
double ehrenfest_force(const std::array<cplx, N>& coeff, const AdiabaticPoint<N>& bo) {
    double force = 0.0;
    for (std::size_t k = 0; k < N; ++k) force -= std::norm(coeff[k]) * bo.gradient[k];
    for (std::size_t l = 0; l < N; ++l) {
        for (std::size_t k = 0; k < N; ++k) {
            if (k == l) continue;
            const double re_rho_lk = std::real(std::conj(coeff[l]) * coeff[k]);
            force -= re_rho_lk * (bo.energy[k] - bo.energy[l]) * bo.nacv[l][k];
        }
    }
    return force;
}

/// Full CT-MQC force: Ehrenfest part plus -(2/(hbar M)) sum_l rho_ll f_l Q_l.
template <std::size_t N>
double ctmqc_force(const TrajectoryState<N>& s, const LocalQuantumMomentum<N>& qm, double mass) {
    const StateArray<N> q = decoherence_projection(s.coeff, s.adiabatic_force, qm);
    double correction = 0.0;
    for (std::size_t l = 0; l < N; ++l) correction += s.population(l) * s.adiabatic_force[l] * q[l];
    return ehrenfest_force(s.coeff, s.bo) - 2.0 / mass * correction;
}

/// Trapezoidal update f_l -= dt (eps_l'(start) + eps_l'(end)) / 2.
template <std::size_t N>
StateArray<N> accumulate_adiabatic_force(const StateArray<N>& f, const StateArray<N>& gradient_start,
                                         const StateArray<N>& gradient_end, double dt) {
    StateArray<N> out{};
    for (std::size_t l = 0; l < N; ++l) out[l] = f[l] - 0.5 * dt * (gradient_start[l] + gradient_end[l]);
    return out;
}

/// One nuclear step of the electronic equation with the quantum momentum held
/// fixed. Energies, NACVs and f are linear in time between the endpoints;
/// the velocity is the mid-step velocity of the Verlet drift. The phases
/// theta_l = int eps_l are applied exactly (interaction picture) and RK4
/// integrates the remaining coupling and decoherence terms, so without
/// couplings every |C_l| is kept exactly.
template <std::size_t N>
std::array<cplx, N> propagate_coefficients(const std::array<cplx, N>& coeff, const AdiabaticPoint<N>& start,
                                           const AdiabaticPoint<N>& end, double velocity,
                                           const StateArray<N>& f_start, const StateArray<N>& f_end,
                                           const LocalQuantumMomentum<N>& qm, double mass, double dt) {
    const auto phase = [&](double fraction) {
        std::array<cplx, N> out{};
        for (std::size_t l = 0; l < N; ++l) {
            const double theta = fraction * dt * (start.energy[l] + 0.5 * fraction * (end.energy[l] - start.energy[l]));
            out[l] = std::polar(1.0, -theta);
        }
        return out;
    };
    const auto rhs_at = [&](double fraction, const std::array<cplx, N>& c) {
        const auto u = phase(fraction);
        StateArray<N> f{};
        StateArray<N> rho{};
        for (std::size_t l = 0; l < N; ++l) {
            f[l] = f_start[l] + fraction * (f_end[l] - f_start[l]);
            rho[l] = std::norm(c[l]);
        }
        const StateArray<N> q = decoherence_projection(rho, f, qm);
        std::array<cplx, N> out{};
        for (std::size_t l = 0; l < N; ++l) {
            cplx coupling{};
            for (std::size_t k = 0; k < N; ++k) {
                const double d = start.nacv[l][k] + fraction * (end.nacv[l][k] - start.nacv[l][k]);
                if (d != 0.0) coupling += d * u[k] * c[k];
            }
            out[l] = -velocity * std::conj(u[l]) * coupling - (q[l] / mass) * c[l];
        }
        return out;
    };
    const auto axpy = [](const std::array<cplx, N>& c, const std::array<cplx, N>& k, double h) {
        std::array<cplx, N> out{};
        for (std::size_t l = 0; l < N; ++l) out[l] = c[l] + h * k[l];
        return out;
    };
    const auto k1 = rhs_at(0.0, coeff);
    const auto k2 = rhs_at(0.5, axpy(coeff, k1, 0.5 * dt));
    const auto k3 = rhs_at(0.5, axpy(coeff, k2, 0.5 * dt));
    const auto k4 = rhs_at(1.0, axpy(coeff, k3, dt));
    const auto u = phase(1.0);
    std::array<cplx, N> out{};
    for (std::size_t l = 0; l < N; ++l) out[l] = u[l] * (coeff[l] + dt / 6.0 * (k1[l] + 2.0 * k2[l] + 2.0 * k3[l] + k4[l]));
    return out;
}

/// Mean-field velocity-Verlet step with CT-MQC corrections under a frozen
/// quantum momentum. With qm == 0 this is exactly the Ehrenfest step.
template <class Provider, std::size_t N = Provider::states>
void coupled_step(TrajectoryState<N>& s, const Provider& provider, const LocalQuantumMomentum<N>& qm, double dt) {
    const double mass = provider.mass();
    const double p_half = s.momentum + 0.5 * dt * ctmqc_force(s, qm, mass);
    const double r_new = s.position + dt * p_half / mass;
    const AdiabaticPoint<N> bo_new = provider(r_new, &s.bo);
    const StateArray<N> f_new = accumulate_adiabatic_force(s.adiabatic_force, s.bo.gradient, bo_new.gradient, dt);
    s.coeff = propagate_coefficients(s.coeff, s.bo, bo_new, p_half / mass, s.adiabatic_force, f_new, qm, mass, dt);
    s.position = r_new;
    s.bo = bo_new;
    s.adiabatic_force = f_new;
    s.momentum = p_half + 0.5 * dt * ctmqc_force(s, qm, mass);
}

/// Time-dependent vector potential along a trajectory,
/// A = sum_l rho_ll f_l + hbar Im sum_lk rho_lk d_lk, rho_lk = C_l^* C_k.
template <std::size_t N>
double vector_potential(const TrajectoryState<N>& s) {
    double a = 0.0;
    for (std::size_t l = 0; l < N; ++l) a += s.population(l) * s.adiabatic_force[l];
    double im = 0.0;
    for (std::size_t l = 0; l < N; ++l)
        for (std::size_t k = 0; k < N; ++k) im += std::imag(std::conj(s.coeff[l]) * s.coeff[k]) * s.bo.nacv[l][k];
    return a + im;
}

/// Residual of the gauge condition eps_apx + A P / M, with eps_apx built
/// from <Phi|H_BO|Phi> - i hbar <Phi|dPhi/dt> - P A / M and dPhi/dt from the
/// electronic equation of motion (coefficients plus basis transport).
/// Returned as a modulus; the exact value is zero for a normalized state.
template <std::size_t N>
double gauge_residual(const TrajectoryState<N>& s, const LocalQuantumMomentum<N>& qm, double mass) {
    const double velocity = s.momentum / mass;
    const auto dc = electronic_rhs(s.coeff, s.bo.energy, s.bo.nacv, velocity, s.adiabatic_force, qm, mass);
    cplx overlap{};  // <Phi|dPhi/dt>
    double bo_energy = 0.0;
    for (std::size_t l = 0; l < N; ++l) {
        overlap += std::conj(s.coeff[l]) * dc[l];
        bo_energy += s.population(l) * s.bo.energy[l];
        for (std::size_t k = 0; k < N; ++k) overlap += velocity * std::conj(s.coeff[k]) * s.coeff[l] * s.bo.nacv[k][l];
    }
    const double a = vector_potential(s);
    const cplx eps_apx = bo_energy - cplx{0.0, 1.0} * overlap - velocity * a;
    return std::abs(eps_apx + a * velocity);
}

template <std::size_t N>
bool is_finite(const TrajectoryState<N>& s) {
    if (!std::isfinite(s.position) || !std::isfinite(s.momentum)) return false;
    for (const auto& c : s.coeff)
        if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    return true;
}

/// Fresh trajectory on a pure adiabatic state with f = 0.
template <class Provider, std::size_t N = Provider::states>
TrajectoryState<N> make_trajectory(const Provider& provider, double position, double momentum, std::size_t state) {
    if (state >= N) throw ConfigError("initial state index out of range");
    TrajectoryState<N> s;
    s.position = position;
    s.momentum = momentum;
    s.coeff[state] = 1.0;
    s.bo = provider(position, nullptr);
    return s;
}

}  // namespace nonadiab
