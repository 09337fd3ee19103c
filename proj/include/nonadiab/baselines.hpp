#pragma once

// Independent-trajectory baselines: Ehrenfest mean field, fewest-switches
// surface hopping, and the independent-trajectory MQC scheme (P' = A').

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nonadiab/error.hpp"
#include "nonadiab/parallel.hpp"
#include "nonadiab/sampling.hpp"
#include "nonadiab/trajectory.hpp"

namespace nonadiab {

/// Ehrenfest step: the coupled step with the quantum momentum switched off.
template <class Provider, std::size_t N = Provider::states>
void ehrenfest_step(TrajectoryState<N>& s, const Provider& provider, double dt) {
    coupled_step(s, provider, LocalQuantumMomentum<N>{}, dt);
}

struct HopRecord {
    std::size_t step = 0;
    std::size_t from = 0;
    std::size_t to = 0;
    bool accepted = false;
};

struct HopState {
    std::size_t active = 0;
    std::vector<HopRecord> log;
    std::mt19937_64 rng;
};

/// Fewest-switches probability of leaving the active surface a for l over
/// one step: g = 2 dt v d_al Re(rho_al) / rho_aa, clamped at 0; rho_al = C_a^* C_l.
template <std::size_t N>
double hop_probability(const TrajectoryState<N>& s, std::size_t active, std::size_t target, double dt, double mass) {
    const double rho_aa = s.population(active);
    if (rho_aa < 1e-12) return 0.0;
    const double re_rho = std::real(std::conj(s.coeff[active]) * s.coeff[target]);
    const double g = 2.0 * dt * (s.momentum / mass) * s.bo.nacv[active][target] * re_rho / rho_aa;
    return std::max(0.0, g);
}

/// Energy on the active surface, eps_a + P^2 / 2M.
template <std::size_t N>
double surface_energy(const TrajectoryState<N>& s, std::size_t active, double mass) {
    return s.bo.energy[active] + s.momentum * s.momentum / (2.0 * mass);
}

/// One surface-hopping step: Verlet on the active surface, RK4 for the
/// coefficients (no decoherence), then at most one stochastic hop. Accepted
/// hops rescale P to conserve eps_a + P^2/2M; without enough kinetic energy
/// the hop is frustrated and nothing changes.
template <class Provider, std::size_t N = Provider::states>
void fssh_step(TrajectoryState<N>& s, HopState& hop, const Provider& provider, double dt, std::size_t step_index) {
    const double mass = provider.mass();
    const std::size_t a = hop.active;
    const double p_half = s.momentum - 0.5 * dt * s.bo.gradient[a];
    const double r_new = s.position + dt * p_half / mass;
    const AdiabaticPoint<N> bo_new = provider(r_new, &s.bo);
    const StateArray<N> f_new = accumulate_adiabatic_force(s.adiabatic_force, s.bo.gradient, bo_new.gradient, dt);
    s.coeff = propagate_coefficients(s.coeff, s.bo, bo_new, p_half / mass, s.adiabatic_force, f_new,
                                     LocalQuantumMomentum<N>{}, mass, dt);
    s.position = r_new;
    s.bo = bo_new;
    s.adiabatic_force = f_new;
    s.momentum = p_half - 0.5 * dt * s.bo.gradient[a];

    StateArray<N> g{};
    double total = 0.0;
    for (std::size_t l = 0; l < N; ++l) {
        if (l == a) continue;
        g[l] = hop_probability(s, a, l, dt, mass);
        total += g[l];
    }
    if (total > 1.0) {
        throw NumericalAbort("hop probability sum " + std::to_string(total) + " exceeds 1 at step " +
                             std::to_string(step_index) + "; dt too large");
    }
    const double draw = uniform01(hop.rng);
    double cumulative = 0.0;
    for (std::size_t l = 0; l < N; ++l) {
        if (l == a) continue;
        cumulative += g[l];
        if (draw >= cumulative) continue;
        const double kinetic = s.momentum * s.momentum / (2.0 * mass) + s.bo.energy[a] - s.bo.energy[l];
        HopRecord record{step_index, a, l, kinetic >= 0.0};
        if (record.accepted) {
            s.momentum = std::copysign(std::sqrt(2.0 * mass * kinetic), s.momentum);
            hop.active = l;
        }
        hop.log.push_back(record);
        break;
    }
}

struct MqcState {
    bool started = false;
    double vector_potential = 0.0;
    double force = 0.0;
};

/// Independent-trajectory MQC: the nuclear force is dA/dt along the
/// trajectory by one-step backward difference; the first step uses the
/// Ehrenfest force.
template <class Provider, std::size_t N = Provider::states>
void mqc_step(TrajectoryState<N>& s, MqcState& m, const Provider& provider, double dt) {
    const double mass = provider.mass();
    if (!m.started) {
        m.force = ehrenfest_force(s.coeff, s.bo);
        m.vector_potential = vector_potential(s);
        m.started = true;
    }
    const double p_half = s.momentum + 0.5 * dt * m.force;
    const double r_new = s.position + dt * p_half / mass;
    const AdiabaticPoint<N> bo_new = provider(r_new, &s.bo);
    const StateArray<N> f_new = accumulate_adiabatic_force(s.adiabatic_force, s.bo.gradient, bo_new.gradient, dt);
    s.coeff = propagate_coefficients(s.coeff, s.bo, bo_new, p_half / mass, s.adiabatic_force, f_new,
                                     LocalQuantumMomentum<N>{}, mass, dt);
    s.position = r_new;
    s.bo = bo_new;
    s.adiabatic_force = f_new;
    const double a_new = vector_potential(s);
    m.force = (a_new - m.vector_potential) / dt;
    m.vector_potential = a_new;
    s.momentum = p_half + 0.5 * dt * m.force;
}

enum class IndependentMethod { Ehrenfest, SurfaceHopping, Mqc };

/// Driver for the independent-trajectory baselines.
template <class Provider>
class IndependentEnsemble {
public:
    static constexpr std::size_t N = Provider::states;
    using State = TrajectoryState<N>;

    IndependentEnsemble(Provider provider, std::vector<State> trajectories, IndependentMethod method, double dt,
                        std::uint64_t seed = 0)
        : provider_(std::move(provider)), trajectories_(std::move(trajectories)), method_(method), dt_(dt) {
        if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
        if (trajectories_.empty()) throw ConfigError("ensemble needs at least one trajectory");
        if (method_ == IndependentMethod::SurfaceHopping) {
            hops_.resize(trajectories_.size());
            for (std::size_t i = 0; i < trajectories_.size(); ++i) {
                hops_[i].rng = make_stream(seed, i, StreamPurpose::Hopping);
                hops_[i].active = dominant_state(trajectories_[i]);
            }
        }
        if (method_ == IndependentMethod::Mqc) mqc_.resize(trajectories_.size());
    }

    const std::vector<State>& trajectories() const { return trajectories_; }
    const std::vector<HopState>& hop_states() const { return hops_; }
    const Provider& provider() const { return provider_; }
    IndependentMethod method() const { return method_; }
    double time() const { return static_cast<double>(steps_) * dt_; }
    std::size_t steps() const { return steps_; }

    void step(WorkerPool& pool) {
        const std::size_t next = steps_ + 1;
        pool.parallel_for(trajectories_.size(), [&](std::size_t i) {
            switch (method_) {
                case IndependentMethod::Ehrenfest: ehrenfest_step(trajectories_[i], provider_, dt_); break;
                case IndependentMethod::SurfaceHopping: fssh_step(trajectories_[i], hops_[i], provider_, dt_, next); break;
                case IndependentMethod::Mqc: mqc_step(trajectories_[i], mqc_[i], provider_, dt_); break;
            }
        });
        steps_ = next;
        for (std::size_t i = 0; i < trajectories_.size(); ++i) {
            if (!is_finite(trajectories_[i])) {
                throw NumericalAbort("non-finite state in trajectory " + std::to_string(i) + " at step " +
                                     std::to_string(steps_));
            }
        }
    }

    double max_gauge_residual() const {
        double worst = 0.0;
        for (const auto& s : trajectories_) worst = std::max(worst, gauge_residual(s, LocalQuantumMomentum<N>{}, provider_.mass()));
        return worst;
    }

private:
    static std::size_t dominant_state(const State& s) {
        std::size_t best = 0;
        for (std::size_t l = 1; l < N; ++l)
            if (s.population(l) > s.population(best)) best = l;
        return best;
    }

    Provider provider_;
    std::vector<State> trajectories_;
    IndependentMethod method_;
    double dt_;
    std::size_t steps_ = 0;
    std::vector<HopState> hops_;
    std::vector<MqcState> mqc_;
};

}  // namespace nonadiab
