#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace cascade {

/// splitmix64 finaliser (Steele, Lea & Flood 2014). Used only to derive
/// well-separated seeds, never as the sampling engine.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Folds stream identifiers into a seed: mix(mix(seed ^ a) ^ b) ...
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> ids) {
    std::uint64_t s = splitmix64(seed);
    for (std::uint64_t id : ids) s = splitmix64(s ^ splitmix64(id + 0x632be59bd9b4e019ULL));
    return s;
}

inline constexpr const char* kGeneratorName =
    "mt19937_64; substream seed = splitmix64 chain over (seed, stream ids, block index); "
    "uniform = (bits >> 11 + 0.5) * 2^-53; exponential by inversion; normal by Box-Muller";

/// Sampling stream. All variates are derived from raw engine bits so results
/// do not depend on the standard library's distribution implementations.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Exponential variate with the given mean; infinite mean yields +inf.
    double exponential(double mean) {
        if (std::isinf(mean)) return mean;
        return -mean * std::log(uniform());
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double theta = 2.0 * 3.14159265358979323846 * uniform();
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace cascade
