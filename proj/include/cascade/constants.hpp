#pragma once

#include <limits>
#include <numbers>

namespace cascade {

/// Unit system: energies in μeV, times in ps. Every conversion between the
/// two goes through `hbar`.
struct PhysicalConstants {
    /// Reduced Planck constant, μeV·ps.
    static constexpr double hbar = 658.2119569;
};

inline constexpr double kHbar = PhysicalConstants::hbar;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kPi = std::numbers::pi;

} // namespace cascade
