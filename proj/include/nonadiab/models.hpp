#pragma once

// Two-state one-dimensional diabatic model Hamiltonians and their analytic
// adiabatization: BO energies, Hellmann-Feynman gradients and non-adiabatic
// coupling vectors, with eigenvector sign continuity along a path.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "nonadiab/error.hpp"

namespace nonadiab {

enum class ModelKind { SingleAvoided, DualAvoided, ExtendedCoupling, DoubleArch };

inline std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::SingleAvoided: return "single_avoided";
        case ModelKind::DualAvoided: return "dual_avoided";
        case ModelKind::ExtendedCoupling: return "extended_coupling";
        case ModelKind::DoubleArch: return "double_arch";
    }
    throw ConfigError("unknown model kind");
}

inline ModelKind model_kind_from_string(std::string_view name) {
    if (name == "single_avoided" || name == "a") return ModelKind::SingleAvoided;
    if (name == "dual_avoided" || name == "b") return ModelKind::DualAvoided;
    if (name == "extended_coupling" || name == "c") return ModelKind::ExtendedCoupling;
    if (name == "double_arch" || name == "d") return ModelKind::DoubleArch;
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

/// Parameter record shared by all four models; each kind reads a subset.
struct ModelParams {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double d = 0.0;
    double e0 = 0.0;

    bool operator==(const ModelParams&) const = default;
};

struct DiabaticModel {
    ModelKind kind = ModelKind::SingleAvoided;
    ModelParams params{};
    double mass = 2000.0;

    bool operator==(const DiabaticModel&) const = default;

    static DiabaticModel defaults(ModelKind kind) {
        DiabaticModel model;
        model.kind = kind;
        switch (kind) {
            case ModelKind::SingleAvoided: model.params = {0.01, 1.6, 0.005, 1.0, 0.0}; break;
            case ModelKind::DualAvoided: model.params = {0.1, 0.28, 0.015, 0.06, 0.05}; break;
            case ModelKind::ExtendedCoupling: model.params = {6e-4, 0.1, 0.9, 0.0, 0.0}; break;
            case ModelKind::DoubleArch: model.params = {6e-4, 0.1, 0.9, 4.0, 0.0}; break;
        }
        return model;
    }
};

/// Real symmetric 2x2 matrix {{h11, h12}, {h12, h22}}.
struct SymMatrix2 {
    double h11 = 0.0;
    double h22 = 0.0;
    double h12 = 0.0;

    double trace() const { return h11 + h22; }
};

using Vec2 = std::array<double, 2>;

/// H_d(R) in the diabatic basis.
inline SymMatrix2 diabatic_hamiltonian(const DiabaticModel& model, double R) {
    const auto& [a, b, c, d, e0] = model.params;
    SymMatrix2 h;
    switch (model.kind) {
        case ModelKind::SingleAvoided:
            h.h11 = R > 0 ? a * (1.0 - std::exp(-b * R)) : -a * (1.0 - std::exp(b * R));
            h.h22 = -h.h11;
            h.h12 = c * std::exp(-d * R * R);
            return h;
        case ModelKind::DualAvoided:
            h.h11 = 0.0;
            h.h22 = -a * std::exp(-b * R * R) + e0;
            h.h12 = c * std::exp(-d * R * R);
            return h;
        case ModelKind::ExtendedCoupling:
            h.h11 = a;
            h.h22 = -a;
            h.h12 = R < 0 ? b * std::exp(c * R) : b * (2.0 - std::exp(-c * R));
            return h;
        case ModelKind::DoubleArch:
            h.h11 = a;
            h.h22 = -a;
            if (R < -d) {
                h.h12 = -b * std::exp(c * (R - d)) + b * std::exp(c * (R + d));
            } else if (R > d) {
                h.h12 = b * std::exp(-c * (R - d)) - b * std::exp(-c * (R + d));
            } else {
                h.h12 = 2.0 * b - b * std::exp(c * (R - d)) - b * std::exp(-c * (R + d));
            }
            return h;
    }
    throw ConfigError("unknown model kind");
}

/// dH_d/dR, closed form for every piece.
inline SymMatrix2 diabatic_gradient(const DiabaticModel& model, double R) {
    const auto& [a, b, c, d, e0] = model.params;
    SymMatrix2 g;
    switch (model.kind) {
        case ModelKind::SingleAvoided:
            g.h11 = a * b * std::exp(R > 0 ? -b * R : b * R);
            g.h22 = -g.h11;
            g.h12 = -2.0 * c * d * R * std::exp(-d * R * R);
            return g;
        case ModelKind::DualAvoided:
            g.h11 = 0.0;
            g.h22 = 2.0 * a * b * R * std::exp(-b * R * R);
            g.h12 = -2.0 * c * d * R * std::exp(-d * R * R);
            return g;
        case ModelKind::ExtendedCoupling:
            g.h12 = b * c * std::exp(R < 0 ? c * R : -c * R);
            return g;
        case ModelKind::DoubleArch:
            if (R < -d) {
                g.h12 = -b * c * std::exp(c * (R - d)) + b * c * std::exp(c * (R + d));
            } else if (R > d) {
                g.h12 = -b * c * std::exp(-c * (R - d)) + b * c * std::exp(-c * (R + d));
            } else {
                g.h12 = -b * c * std::exp(c * (R - d)) + b * c * std::exp(-c * (R + d));
            }
            return g;
    }
    throw ConfigError("unknown model kind");
}

/// Eigen-decomposition of a symmetric 2x2 matrix, ascending energies.
/// vectors[l] is the (column) eigenvector of state l; signs[l] records the
/// flip applied relative to the closed-form rotation-angle parameterization.
struct Eigen2 {
    std::array<double, 2> energies{};
    std::array<Vec2, 2> vectors{};
    std::array<int, 2> signs{1, 1};
};

namespace detail {
inline double dot(const Vec2& u, const Vec2& v) { return u[0] * v[0] + u[1] * v[1]; }

inline bool nonnegative_leading(const Vec2& v) {
    // Ties on a vanishing first component fall back to the second one.
    constexpr double tie = 1e-300;
    if (std::abs(v[0]) > tie) return v[0] > 0.0;
    return v[1] >= 0.0;
}
}  // namespace detail

/// Closed-form diagonalization. With `previous` the eigenvector signs follow
/// maximal overlap with the previous point; without it each eigenvector has
/// a nonnegative first component.
inline Eigen2 adiabatize(const SymMatrix2& h, const std::array<Vec2, 2>* previous = nullptr) {
    const double mean = 0.5 * (h.h11 + h.h22);
    const double half_diff = 0.5 * (h.h11 - h.h22);
    const double radius = std::hypot(half_diff, h.h12);
    const double theta = 0.5 * std::atan2(h.h12, half_diff);
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);

    Eigen2 out;
    out.energies = {mean - radius, mean + radius};
    out.vectors[0] = {-sn, cs};
    out.vectors[1] = {cs, sn};
    for (std::size_t l = 0; l < 2; ++l) {
        const bool keep = previous ? detail::dot(out.vectors[l], (*previous)[l]) >= 0.0
                                   : detail::nonnegative_leading(out.vectors[l]);
        if (!keep) {
            out.vectors[l] = {-out.vectors[l][0], -out.vectors[l][1]};
            out.signs[l] = -1;
        }
    }
    return out;
}

/// BO data at one nuclear position for an N-state electronic problem.
/// nacv[l][k] = <phi_l | d/dR phi_k>, antisymmetric.
template <std::size_t N>
struct AdiabaticPoint {
    double position = 0.0;
    std::array<double, N> energy{};
    std::array<double, N> gradient{};
    std::array<std::array<double, N>, N> nacv{};
    std::array<std::array<double, N>, N> vectors{};  // vectors[l] = eigenvector of state l
};

inline constexpr double kDefaultDegeneracyFloor = 1e-12;

/// BO energies, gradients and NACV from analytic dH/dR via Hellmann-Feynman.
inline AdiabaticPoint<2> adiabatic_point(const DiabaticModel& model, double R,
                                         const AdiabaticPoint<2>* previous = nullptr,
                                         double degeneracy_floor = kDefaultDegeneracyFloor) {
    const SymMatrix2 h = diabatic_hamiltonian(model, R);
    const SymMatrix2 g = diabatic_gradient(model, R);
    std::array<Vec2, 2> prev_vectors{};
    if (previous) prev_vectors = previous->vectors;
    const Eigen2 eig = adiabatize(h, previous ? &prev_vectors : nullptr);

    const auto apply = [&g](const Vec2& v) -> Vec2 {
        return {g.h11 * v[0] + g.h12 * v[1], g.h12 * v[0] + g.h22 * v[1]};
    };
    const Vec2 g_v1 = apply(eig.vectors[0]);
    const Vec2 g_v2 = apply(eig.vectors[1]);

    AdiabaticPoint<2> p;
    p.position = R;
    p.energy = eig.energies;
    p.vectors = eig.vectors;
    p.gradient = {detail::dot(eig.vectors[0], g_v1), detail::dot(eig.vectors[1], g_v2)};
    const double gap = eig.energies[1] - eig.energies[0];
    if (gap < degeneracy_floor) {
        throw DegeneracyError("BO gap " + std::to_string(gap) + " below degeneracy floor at R=" +
                              std::to_string(R));
    }
    const double d12 = detail::dot(eig.vectors[0], g_v2) / gap;
    p.nacv[0][1] = d12;
    p.nacv[1][0] = -d12;
    return p;
}

/// Pads a two-state point with extra uncoupled states (energies supplied),
/// used to run the N-state code paths on the two-state models.
template <std::size_t N>
AdiabaticPoint<N> embed(const AdiabaticPoint<2>& p, const std::array<double, N - 2>& extra_energies) {
    static_assert(N >= 2);
    AdiabaticPoint<N> out;
    out.position = p.position;
    for (std::size_t l = 0; l < 2; ++l) {
        out.energy[l] = p.energy[l];
        out.gradient[l] = p.gradient[l];
        for (std::size_t k = 0; k < 2; ++k) {
            out.nacv[l][k] = p.nacv[l][k];
            out.vectors[l][k] = p.vectors[l][k];
        }
    }
    for (std::size_t l = 2; l < N; ++l) {
        out.energy[l] = extra_energies[l - 2];
        out.vectors[l][l] = 1.0;
    }
    return out;
}

}  // namespace nonadiab
