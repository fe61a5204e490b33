#pragma once

#include <array>
#include <string>
#include <string_view>

#include "model.hpp"

namespace cascade {

enum class Basis { Rectilinear, Diagonal, Circular };

inline constexpr std::array<Basis, 3> kAllBases{Basis::Rectilinear, Basis::Diagonal,
                                                Basis::Circular};

inline std::string_view to_string(Basis b) {
    switch (b) {
    case Basis::Rectilinear: return "rectilinear";
    case Basis::Diagonal: return "diagonal";
    case Basis::Circular: return "circular";
    }
    return "?";
}

inline Basis basis_from_string(std::string_view s) {
    for (Basis b : kAllBases)
        if (to_string(b) == s) return b;
    throw UsageError("unknown basis '" + std::string(s) + "'");
}

using Vector2c = Eigen::Matrix<Complex, 2, 1>;

/// Single-photon projector states of a basis: index 0 is H, D or (H+iV)/√2.
inline std::array<Vector2c, 2> basis_states(Basis b) {
    const double r = 1.0 / std::sqrt(2.0);
    const Complex i{0.0, 1.0};
    switch (b) {
    case Basis::Rectilinear: return {Vector2c(1.0, 0.0), Vector2c(0.0, 1.0)};
    case Basis::Diagonal: return {Vector2c(r, r), Vector2c(r, -r)};
    case Basis::Circular: return {Vector2c(r, r * i), Vector2c(r, -r * i)};
    }
    return {};
}

/// Two-photon outcome states ordered (0,0), (0,1), (1,0), (1,1) where the
/// first index is the XX photon. Outcomes 0 and 3 are co-polarised.
inline std::array<Vector4c, 4> outcome_states(Basis b) {
    const auto e = basis_states(b);
    std::array<Vector4c, 4> out;
    for (int a = 0; a < 2; ++a)
        for (int c = 0; c < 2; ++c) {
            Vector4c v;
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) v(2 * i + j) = e[a](i) * e[c](j);
            out[2 * a + c] = v;
        }
    return out;
}

inline constexpr bool is_co_polarised(int outcome) { return outcome == 0 || outcome == 3; }

/// Σ co-polarised projectors − Σ cross-polarised projectors; equals
/// σz⊗σz, σx⊗σx or σy⊗σy for the three bases.
inline Matrix4c correlation_observable(Basis b) {
    const auto states = outcome_states(b);
    Matrix4c m = Matrix4c::Zero();
    for (int o = 0; o < 4; ++o)
        m += (is_co_polarised(o) ? 1.0 : -1.0) * states[o] * states[o].adjoint();
    return m;
}

/// Expected degree of correlation Tr[ρ·M_basis].
inline double expected_correlation(const TwoPhotonDensityMatrix& rho, Basis b) {
    return rho.expectation(correlation_observable(b));
}

} // namespace cascade
