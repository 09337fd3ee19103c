#pragma once

// Exact two-state wave-packet reference: symmetric split-operator propagation
// on a periodic uniform grid and the exact-factorization observables derived
// from the adiabatic amplitudes F_l(R) = C_l(R) chi(R).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nonadiab/error.hpp"
#include "nonadiab/fft.hpp"
#include "nonadiab/models.hpp"
#include "nonadiab/sampling.hpp"

namespace nonadiab {

using cplx = std::complex<double>;

struct Grid {
    double r_min = -30.0;
    double r_max = 30.0;
    std::size_t points = 4096;

    double spacing() const { return (r_max - r_min) / static_cast<double>(points); }
    double position(std::size_t j) const { return r_min + static_cast<double>(j) * spacing(); }

    void validate() const {
        if (!(r_max > r_min)) throw ConfigError("grid: r_max must exceed r_min");
        if (points < 2 || (points & (points - 1)) != 0) {
            throw ConfigError("grid: point count must be a power of two, got " + std::to_string(points));
        }
    }

    /// Default grids per model: +-30 bohr / 4096 points for the avoided
    /// crossings, +-80 bohr / 8192 points for the extended-coupling models
    /// (the transmitted lower-surface packet gains ~0.2 hartree and outruns
    /// a +-40 box before the second passage of the reflected branch).
    static Grid defaults(ModelKind kind) {
        if (kind == ModelKind::SingleAvoided || kind == ModelKind::DualAvoided) return {-30.0, 30.0, 4096};
        return {-80.0, 80.0, 8192};
    }

    bool operator==(const Grid&) const = default;
};

enum class Representation { Diabatic, Adiabatic };

struct GridWavefunction {
    Grid grid;
    std::array<std::vector<cplx>, 2> amplitude;
    Representation representation = Representation::Adiabatic;
    double time = 0.0;

    double population(std::size_t l) const {
        double sum = 0.0;
        for (const auto& f : amplitude[l]) sum += std::norm(f);
        return sum * grid.spacing();
    }
    double norm() const { return population(0) + population(1); }
};

/// BO data tabulated on the grid, swept left to right with eigenvector sign
/// continuity so the adiabatic amplitudes are smooth functions of R.
struct GridBasis {
    Grid grid;
    double mass = 2000.0;
    std::vector<AdiabaticPoint<2>> points;

    GridBasis(const DiabaticModel& model, const Grid& g) : grid(g), mass(model.mass) {
        grid.validate();
        points.reserve(grid.points);
        for (std::size_t j = 0; j < grid.points; ++j) {
            points.push_back(adiabatic_point(model, grid.position(j), j ? &points.back() : nullptr));
        }
    }
};

inline GridWavefunction to_adiabatic(const GridWavefunction& psi, const GridBasis& basis) {
    if (psi.representation == Representation::Adiabatic) return psi;
    GridWavefunction out = psi;
    out.representation = Representation::Adiabatic;
    for (std::size_t j = 0; j < psi.grid.points; ++j) {
        const auto& v = basis.points[j].vectors;
        const cplx d1 = psi.amplitude[0][j];
        const cplx d2 = psi.amplitude[1][j];
        out.amplitude[0][j] = v[0][0] * d1 + v[0][1] * d2;
        out.amplitude[1][j] = v[1][0] * d1 + v[1][1] * d2;
    }
    return out;
}

inline GridWavefunction to_diabatic(const GridWavefunction& psi, const GridBasis& basis) {
    if (psi.representation == Representation::Diabatic) return psi;
    GridWavefunction out = psi;
    out.representation = Representation::Diabatic;
    for (std::size_t j = 0; j < psi.grid.points; ++j) {
        const auto& v = basis.points[j].vectors;
        const cplx f1 = psi.amplitude[0][j];
        const cplx f2 = psi.amplitude[1][j];
        out.amplitude[0][j] = v[0][0] * f1 + v[1][0] * f2;
        out.amplitude[1][j] = v[0][1] * f1 + v[1][1] * f2;
    }
    return out;
}

/// Normalized Gaussian chi(R) = N exp(-(R-Rc)^2/(2 sigma^2)) exp(i k0 R) on
/// adiabatic state `state`; |chi|^2 ~ exp(-(R-Rc)^2/sigma^2).
inline GridWavefunction init_gaussian_packet(const Grid& grid, const PacketShape& packet, std::size_t state) {
    grid.validate();
    if (!(packet.sigma > 0.0)) throw ConfigError("packet sigma must be > 0");
    if (state > 1) throw ConfigError("initial state index must be 0 or 1");
    const auto density_at = [&](double r) {
        const double x = r - packet.center;
        return std::exp(-x * x / (packet.sigma * packet.sigma)) / (packet.sigma * std::sqrt(std::numbers::pi));
    };
    const double edge = std::max(density_at(grid.r_min), density_at(grid.r_max));
    if (edge > 1e-10) {
        throw ConfigError("initial packet density " + std::to_string(edge) + " at the grid edge exceeds 1e-10");
    }
    GridWavefunction psi;
    psi.grid = grid;
    psi.representation = Representation::Adiabatic;
    psi.amplitude[0].assign(grid.points, cplx{});
    psi.amplitude[1].assign(grid.points, cplx{});
    auto& f = psi.amplitude[state];
    for (std::size_t j = 0; j < grid.points; ++j) {
        const double r = grid.position(j);
        const double x = r - packet.center;
        f[j] = std::exp(-x * x / (2.0 * packet.sigma * packet.sigma)) * std::polar(1.0, packet.momentum * r);
    }
    const double scale = 1.0 / std::sqrt(psi.norm());
    for (auto& z : f) z *= scale;
    return psi;
}

/// Symmetric split-operator propagator: half potential step in the diabatic
/// representation (closed-form 2x2 exponential), full kinetic step in
/// momentum space, half potential step. Order 4 composes three such steps
/// of lengths w1 dt, w0 dt, w1 dt (triple jump), neighbouring potential
/// factors merged.
class GridPropagator {
public:
    GridPropagator(const DiabaticModel& model, const Grid& grid, double dt, int order = 2)
        : basis_(model, grid), dt_(dt), fft_(grid.points, 2) {
        if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
        if (order != 2 && order != 4) throw ConfigError("split order must be 2 or 4");
        const std::size_t n = grid.points;
        potential_.resize(n);
        for (std::size_t j = 0; j < n; ++j) potential_[j] = diabatic_hamiltonian(model, grid.position(j));
        wavenumber_.resize(n);
        const double dk = 2.0 * std::numbers::pi / (static_cast<double>(n) * grid.spacing());
        for (std::size_t j = 0; j < n; ++j)
            wavenumber_[j] = dk * (j < n / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(n));

        std::vector<double> kinetic_fractions{1.0};
        if (order == 4) {
            const double w1 = 1.0 / (2.0 - std::cbrt(2.0));
            const double w0 = 1.0 - 2.0 * w1;
            kinetic_fractions = {w1, w0, w1};
        }
        // potential factor i sits before kinetic factor i; the last one closes the step
        for (std::size_t i = 0; i <= kinetic_fractions.size(); ++i) {
            const double before = i > 0 ? kinetic_fractions[i - 1] : 0.0;
            const double after = i < kinetic_fractions.size() ? kinetic_fractions[i] : 0.0;
            potential_factors_.push_back(potential_exponential(0.5 * (before + after) * dt));
        }
        for (double w : kinetic_fractions) {
            auto& phase = kinetic_factors_.emplace_back(n);
            for (std::size_t j = 0; j < n; ++j)
                phase[j] = std::polar(1.0, -wavenumber_[j] * wavenumber_[j] / (2.0 * model.mass) * w * dt);
        }
    }

    const GridBasis& basis() const { return basis_; }
    double dt() const { return dt_; }

    /// One step of length dt on a diabatic-representation wavefunction.
    void step(GridWavefunction& psi) {
        require_diabatic(psi);
        const std::size_t n = psi.grid.points;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < kinetic_factors_.size(); ++i) {
            apply_potential(psi, potential_factors_[i]);
            for (std::size_t l = 0; l < 2; ++l) std::ranges::copy(psi.amplitude[l], fft_.row(l).begin());
            fft_.forward();
            for (std::size_t l = 0; l < 2; ++l) {
                auto row = fft_.row(l);
                for (std::size_t j = 0; j < n; ++j) row[j] *= kinetic_factors_[i][j] * inv_n;
            }
            fft_.backward();
            for (std::size_t l = 0; l < 2; ++l) std::ranges::copy(fft_.row(l), psi.amplitude[l].begin());
        }
        apply_potential(psi, potential_factors_.back());
        psi.time += dt_;
    }

    /// <Psi|H|Psi> / <Psi|Psi> for a diabatic-representation wavefunction.
    double energy(const GridWavefunction& psi) {
        require_diabatic(psi);
        const std::size_t n = psi.grid.points;
        const double dr = psi.grid.spacing();
        double potential = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const cplx a = psi.amplitude[0][j];
            const cplx b = psi.amplitude[1][j];
            const SymMatrix2& h = potential_[j];
            potential += h.h11 * std::norm(a) + h.h22 * std::norm(b) + 2.0 * h.h12 * std::real(std::conj(a) * b);
        }
        for (std::size_t l = 0; l < 2; ++l) std::ranges::copy(psi.amplitude[l], fft_.row(l).begin());
        fft_.forward();
        double kinetic = 0.0;
        for (std::size_t l = 0; l < 2; ++l) {
            auto row = fft_.row(l);
            for (std::size_t j = 0; j < n; ++j) kinetic += std::norm(row[j]) * wavenumber_[j] * wavenumber_[j];
        }
        kinetic /= 2.0 * basis_.mass * static_cast<double>(n);
        return (kinetic + potential) * dr / psi.norm();
    }

private:
    struct PotentialFactor {
        cplx u11;
        cplx u22;
        cplx u12;
    };

    static void require_diabatic(const GridWavefunction& psi) {
        if (psi.representation != Representation::Diabatic) {
            throw ConfigError("split-operator propagation requires the diabatic representation");
        }
    }

    // exp(-i V tau) pointwise
    std::vector<PotentialFactor> potential_exponential(double tau) const {
        std::vector<PotentialFactor> out(potential_.size());
        const cplx mi{0.0, -1.0};
        for (std::size_t j = 0; j < out.size(); ++j) {
            const SymMatrix2& h = potential_[j];
            const double mean = 0.5 * h.trace();
            const double half_diff = 0.5 * (h.h11 - h.h22);
            const double radius = std::hypot(half_diff, h.h12);
            const double cos_rt = std::cos(radius * tau);
            const double sinc = radius > 0.0 ? std::sin(radius * tau) / radius : tau;
            const cplx global = std::polar(1.0, -mean * tau);
            out[j] = {global * (cos_rt + mi * sinc * half_diff), global * (cos_rt - mi * sinc * half_diff),
                      global * (mi * sinc * h.h12)};
        }
        return out;
    }

    static void apply_potential(GridWavefunction& psi, const std::vector<PotentialFactor>& factor) {
        auto& a = psi.amplitude[0];
        auto& b = psi.amplitude[1];
        for (std::size_t j = 0; j < a.size(); ++j) {
            const PotentialFactor& u = factor[j];
            const cplx x = a[j];
            const cplx y = b[j];
            a[j] = u.u11 * x + u.u12 * y;
            b[j] = u.u12 * x + u.u22 * y;
        }
    }

    GridBasis basis_;
    double dt_;
    BatchedFft fft_;
    std::vector<SymMatrix2> potential_;
    std::vector<std::vector<PotentialFactor>> potential_factors_;
    std::vector<double> wavenumber_;
    std::vector<std::vector<cplx>> kinetic_factors_;
};

/// Probability within `margin` bohr of either grid edge.
inline double edge_probability(const GridWavefunction& psi, double margin = 2.0) {
    double sum = 0.0;
    for (std::size_t j = 0; j < psi.grid.points; ++j) {
        const double r = psi.grid.position(j);
        if (r < psi.grid.r_min + margin || r > psi.grid.r_max - margin) {
            sum += std::norm(psi.amplitude[0][j]) + std::norm(psi.amplitude[1][j]);
        }
    }
    return sum * psi.grid.spacing();
}

inline constexpr double kRelativeDensityFloor = 1e-7;

struct ExactObservables {
    std::array<double, 2> population{};
    double coherence = 0.0;
    std::vector<double> density;
    std::array<std::vector<double>, 2> bo_density;
};

/// Populations, |chi|^2, |F_l|^2 and the coherence indicator
/// integral |F_1|^2 |F_2|^2 / |chi|^2 dR (integrand dropped below the density floor).
inline ExactObservables exact_observables(const GridWavefunction& psi) {
    if (psi.representation != Representation::Adiabatic) {
        throw ConfigError("exact_observables requires the adiabatic representation");
    }
    const std::size_t n = psi.grid.points;
    const double dr = psi.grid.spacing();
    ExactObservables obs;
    obs.density.resize(n);
    obs.bo_density[0].resize(n);
    obs.bo_density[1].resize(n);
    double peak = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        obs.bo_density[0][j] = std::norm(psi.amplitude[0][j]);
        obs.bo_density[1][j] = std::norm(psi.amplitude[1][j]);
        obs.density[j] = obs.bo_density[0][j] + obs.bo_density[1][j];
        peak = std::max(peak, obs.density[j]);
    }
    const double floor = kRelativeDensityFloor * peak;
    for (std::size_t j = 0; j < n; ++j) {
        obs.population[0] += obs.bo_density[0][j];
        obs.population[1] += obs.bo_density[1][j];
        if (obs.density[j] > floor) obs.coherence += obs.bo_density[0][j] * obs.bo_density[1][j] / obs.density[j];
    }
    obs.population[0] *= dr;
    obs.population[1] *= dr;
    obs.coherence *= dr;
    return obs;
}

/// Spectral first derivative of each row of `values` (periodic grid).
inline std::array<std::vector<cplx>, 2> spectral_derivative(const std::array<std::vector<cplx>, 2>& values,
                                                            const Grid& grid) {
    const std::size_t n = grid.points;
    BatchedFft fft(n, 2);
    for (std::size_t l = 0; l < 2; ++l) std::ranges::copy(values[l], fft.row(l).begin());
    fft.forward();
    const double dk = 2.0 * std::numbers::pi / (static_cast<double>(n) * grid.spacing());
    for (std::size_t l = 0; l < 2; ++l) {
        auto row = fft.row(l);
        for (std::size_t j = 0; j < n; ++j) {
            // The Nyquist mode has no well-defined derivative; drop it.
            const double k = j < n / 2 ? dk * static_cast<double>(j)
                                       : (j == n / 2 ? 0.0 : dk * (static_cast<double>(j) - static_cast<double>(n)));
            row[j] *= cplx{0.0, k} / static_cast<double>(n);
        }
    }
    fft.backward();
    std::array<std::vector<cplx>, 2> out;
    for (std::size_t l = 0; l < 2; ++l) out[l].assign(fft.row(l).begin(), fft.row(l).end());
    return out;
}

struct GaugeInvariantTdpes {
    std::vector<double> value;  // quiet NaN where masked
    std::vector<bool> mask;
};

/// Gauge-invariant part of the exact TDPES,
///   eps_GI = sum_l |C_l|^2 eps_l + (hbar^2 <dPhi|dPhi> - A^2) / (2M),
/// with C_l = F_l/|chi|, dPhi expanded as D_l = C_l' + sum_k d_lk C_k, and
/// A = hbar Im sum_l C_l^* D_l. Evaluated from the spectral derivatives of
/// F_l (smooth in low-density regions, unlike C_l).
inline GaugeInvariantTdpes exact_tdpes_gi(const GridWavefunction& psi, const GridBasis& basis) {
    if (psi.representation != Representation::Adiabatic) {
        throw ConfigError("exact_tdpes_gi requires the adiabatic representation");
    }
    const std::size_t n = psi.grid.points;
    const auto dF = spectral_derivative(psi.amplitude, psi.grid);
    GaugeInvariantTdpes out;
    out.value.assign(n, std::numeric_limits<double>::quiet_NaN());
    out.mask.assign(n, false);
    double peak = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        peak = std::max(peak, std::norm(psi.amplitude[0][j]) + std::norm(psi.amplitude[1][j]));
    }
    const double floor = kRelativeDensityFloor * peak;
    for (std::size_t j = 0; j < n; ++j) {
        const cplx f1 = psi.amplitude[0][j];
        const cplx f2 = psi.amplitude[1][j];
        const double chi2 = std::norm(f1) + std::norm(f2);
        if (!(chi2 > floor) || chi2 <= std::numeric_limits<double>::min()) continue;
        const auto& p = basis.points[j];
        // covariant derivatives G_l = F_l' + sum_k d_lk F_k; by Lagrange's identity
        // sum_l |D_l|^2 - A^2 = |F_1 G_2 - F_2 G_1|^2 / |chi|^4, free of the common phase
        const cplx g1 = dF[0][j] + p.nacv[0][1] * f2;
        const cplx g2 = dF[1][j] + p.nacv[1][0] * f1;
        const double kinetic = std::norm(f1 * g2 - f2 * g1) / (chi2 * chi2);
        const double bo_part = (std::norm(f1) * p.energy[0] + std::norm(f2) * p.energy[1]) / chi2;
        out.value[j] = bo_part + kinetic / (2.0 * basis.mass);
        out.mask[j] = true;
    }
    return out;
}

struct ChannelProbabilities {
    double t1 = 0.0;
    double t2 = 0.0;
    double r1 = 0.0;
    double r2 = 0.0;
    bool unsettled = false;

    double sum() const { return t1 + t2 + r1 + r2; }
};

/// Transmission (R > R_split) and reflection probabilities per surface.
/// Flags the result unsettled if more than 1e-3 probability lies within
/// 1 bohr of R_split.
inline ChannelProbabilities channel_probabilities(const GridWavefunction& psi, double r_split = 0.0) {
    if (psi.representation != Representation::Adiabatic) {
        throw ConfigError("channel_probabilities requires the adiabatic representation");
    }
    ChannelProbabilities out;
    double near = 0.0;
    const double dr = psi.grid.spacing();
    for (std::size_t j = 0; j < psi.grid.points; ++j) {
        const double r = psi.grid.position(j);
        const double p1 = std::norm(psi.amplitude[0][j]) * dr;
        const double p2 = std::norm(psi.amplitude[1][j]) * dr;
        if (r >= r_split) {
            out.t1 += p1;
            out.t2 += p2;
        } else {
            out.r1 += p1;
            out.r2 += p2;
        }
        if (std::abs(r - r_split) < 1.0) near += p1 + p2;
    }
    out.unsettled = near > 1e-3;
    return out;
}

}  // namespace nonadiab
