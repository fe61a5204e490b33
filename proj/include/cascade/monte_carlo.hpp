#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "model.hpp"
#include "polarisation.hpp"
#include "rng.hpp"

namespace cascade {

enum class EventCategory { Coherent, Dephased, SpinScattered, Background };

/// One emitted photon pair.
struct PairEvent {
    EventCategory category = EventCategory::Background;
    double phase = 0.0;         // S·t/ħ at emission; Coherent only
    double emission_time = 0.0; // ps after the XX photon; dot-origin events only
};

struct SimConfig {
    ModelParams params;
    std::uint64_t n_pairs = 100000;
    std::uint64_t seed = 1;
    unsigned shards = 1;
    /// Worker threads; 0 means one per hardware thread (capped at shards).
    unsigned threads = 0;
    /// Probability that a pair is detected at all. 1 disables thinning.
    double detection_efficiency = 1.0;

    void validate() const {
        params.validate();
        if (shards == 0) throw UsageError("shards must be at least 1");
        if (!(detection_efficiency > 0.0 && detection_efficiency <= 1.0))
            throw DomainError("detection efficiency must lie in (0, 1]");
    }
};

/// Random streams are attached to fixed-size blocks of pairs, not to shards,
/// so every output depends only on (seed, n_pairs, params). Shards are
/// contiguous runs of blocks handed to worker threads.
inline constexpr std::uint64_t kPairsPerBlock = 1u << 14;

namespace detail {

inline std::uint64_t block_count(std::uint64_t n_pairs) {
    return (n_pairs + kPairsPerBlock - 1) / kPairsPerBlock;
}

/// Runs `work(block_index, first_pair, pair_count) -> Partial` for every block
/// and returns the partials in block order.
template <class Partial, class Work>
std::vector<Partial> run_blocks(const SimConfig& cfg, Work&& work) {
    const std::uint64_t n_blocks = block_count(cfg.n_pairs);
    std::vector<Partial> partials(n_blocks);
    if (n_blocks == 0) return partials;

    const std::uint64_t shards = std::min<std::uint64_t>(cfg.shards, n_blocks);
    auto run_shard = [&](std::uint64_t shard) {
        const std::uint64_t lo = n_blocks * shard / shards;
        const std::uint64_t hi = n_blocks * (shard + 1) / shards;
        for (std::uint64_t b = lo; b < hi; ++b) {
            const std::uint64_t first = b * kPairsPerBlock;
            const std::uint64_t count = std::min(kPairsPerBlock, cfg.n_pairs - first);
            partials[b] = work(b, first, count);
        }
    };

    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, shards));
    if (threads <= 1) {
        for (std::uint64_t s = 0; s < shards; ++s) run_shard(s);
        return partials;
    }
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            for (std::uint64_t s = t; s < shards; s += threads) run_shard(s);
        });
    pool.clear();
    return partials;
}

} // namespace detail

/// Draws pair events for one parameter set from a random stream.
///
/// Background with probability 1 − k; otherwise three exponential clocks
/// (radiative, spin scattering, cross dephasing) run together. Radiative
/// first gives Coherent; any spin flip before emission gives SpinScattered;
/// the remaining case (dephased before emission, no flip) gives Dephased.
/// The radiative clock always supplies the emission time.
class EventSampler {
public:
    explicit EventSampler(const ModelParams& p) : p_(p), rad_phase_rate_(p.S / kHbar) {
        p.validate();
    }

    PairEvent operator()(RandomStream& rng) const {
        PairEvent e;
        if (p_.k < 1.0 && rng.uniform() >= p_.k) {
            e.category = EventCategory::Background;
            return e;
        }
        const double t_rad = rng.exponential(p_.tau1);
        const double t_ss = rng.exponential(p_.tau_ss);
        const double t_hv = rng.exponential(p_.tau_hv);
        e.emission_time = t_rad;
        if (t_rad <= t_ss && t_rad <= t_hv) {
            e.category = EventCategory::Coherent;
            e.phase = rad_phase_rate_ * t_rad;
        } else if (t_ss < t_rad) {
            // A spin flip before emission removes the correlation even when
            // the phase was already randomised.
            e.category = EventCategory::SpinScattered;
        } else {
            e.category = EventCategory::Dephased;
        }
        return e;
    }

private:
    ModelParams p_;
    double rad_phase_rate_;
};

/// Visits every event in generation order.
inline void generate_events(const SimConfig& cfg, const std::function<void(const PairEvent&)>& visit) {
    cfg.validate();
    const EventSampler sample(cfg.params);
    for (std::uint64_t b = 0; b < detail::block_count(cfg.n_pairs); ++b) {
        RandomStream rng(derive_seed(cfg.seed, {b}));
        const std::uint64_t count = std::min(kPairsPerBlock, cfg.n_pairs - b * kPairsPerBlock);
        for (std::uint64_t i = 0; i < count; ++i) visit(sample(rng));
    }
}

inline std::vector<PairEvent> generate_events(const SimConfig& cfg) {
    std::vector<PairEvent> out;
    out.reserve(cfg.n_pairs);
    generate_events(cfg, [&](const PairEvent& e) { out.push_back(e); });
    return out;
}

inline TwoPhotonDensityMatrix event_to_state(const PairEvent& e) {
    TwoPhotonDensityMatrix rho;
    switch (e.category) {
    case EventCategory::Coherent: {
        const Vector4c psi = cascade_state(e.phase);
        rho.elements = psi * psi.adjoint();
        break;
    }
    case EventCategory::Dephased:
        rho(0, 0) = rho(3, 3) = 0.5;
        break;
    case EventCategory::SpinScattered:
    case EventCategory::Background:
        rho.elements = Matrix4c::Identity() / 4.0;
        break;
    }
    return rho;
}

/// Sufficient statistics of an event stream.
struct EventTally {
    std::uint64_t coherent = 0;
    std::uint64_t dephased = 0;
    std::uint64_t spin_scattered = 0;
    std::uint64_t background = 0;
    Complex phase_sum{0.0, 0.0};      // Σ exp(i·phase) over Coherent
    double coherent_time_sum = 0.0;   // Σ emission_time over Coherent

    std::uint64_t total() const { return coherent + dephased + spin_scattered + background; }

    void add(const PairEvent& e) {
        switch (e.category) {
        case EventCategory::Coherent:
            ++coherent;
            phase_sum += std::polar(1.0, e.phase);
            coherent_time_sum += e.emission_time;
            break;
        case EventCategory::Dephased: ++dephased; break;
        case EventCategory::SpinScattered: ++spin_scattered; break;
        case EventCategory::Background: ++background; break;
        }
    }

    EventTally& operator+=(const EventTally& o) {
        coherent += o.coherent;
        dephased += o.dephased;
        spin_scattered += o.spin_scattered;
        background += o.background;
        phase_sum += o.phase_sum;
        coherent_time_sum += o.coherent_time_sum;
        return *this;
    }

    /// Σ event_to_state(e) / N, assembled from the sufficient statistics.
    TwoPhotonDensityMatrix mean_state() const {
        const double n = static_cast<double>(total());
        TwoPhotonDensityMatrix rho;
        if (n == 0) return rho;
        const double uncorrelated = static_cast<double>(spin_scattered + background) / 4.0;
        const double correlated = static_cast<double>(coherent + dephased) / 2.0;
        rho(0, 0) = rho(3, 3) = (correlated + uncorrelated) / n;
        rho(1, 1) = rho(2, 2) = uncorrelated / n;
        rho(3, 0) = phase_sum / (2.0 * n);
        rho(0, 3) = std::conj(phase_sum) / (2.0 * n);
        return rho;
    }
};

inline EventTally tally_events(const SimConfig& cfg) {
    cfg.validate();
    const EventSampler sample(cfg.params);
    auto partials = detail::run_blocks<EventTally>(
        cfg, [&](std::uint64_t block, std::uint64_t, std::uint64_t count) {
            RandomStream rng(derive_seed(cfg.seed, {block}));
            EventTally t;
            for (std::uint64_t i = 0; i < count; ++i) t.add(sample(rng));
            return t;
        });
    EventTally total;
    for (const auto& p : partials) total += p;
    return total;
}

/// Sample mean of the per-event two-photon states.
inline TwoPhotonDensityMatrix monte_carlo_density_matrix(const SimConfig& cfg) {
    return tally_events(cfg).mean_state();
}

struct CoincidenceTable {
    Basis basis = Basis::Rectilinear;
    std::uint64_t co_counts = 0;
    std::uint64_t cross_counts = 0;
    std::uint64_t n_cycles = 0;
};

/// Projective measurement of every pair in `basis`, one sampled outcome per
/// detected pair.
inline CoincidenceTable measure_coincidences(const SimConfig& cfg, Basis basis) {
    cfg.validate();
    const EventSampler sample(cfg.params);
    const auto outcomes = outcome_states(basis);
    const double eta = cfg.detection_efficiency;

    struct Counts {
        std::uint64_t co = 0, cross = 0;
    };
    auto partials = detail::run_blocks<Counts>(
        cfg, [&](std::uint64_t block, std::uint64_t, std::uint64_t count) {
            RandomStream rng(derive_seed(cfg.seed, {block, static_cast<std::uint64_t>(basis) + 1}));
            Counts c;
            for (std::uint64_t i = 0; i < count; ++i) {
                const PairEvent e = sample(rng);
                if (eta < 1.0 && rng.uniform() >= eta) continue;
                const TwoPhotonDensityMatrix rho = event_to_state(e);
                const double u = rng.uniform();
                double cumulative = 0.0;
                int outcome = 3;
                for (int o = 0; o < 3; ++o) {
                    cumulative += rho.overlap(outcomes[o]);
                    if (u < cumulative) {
                        outcome = o;
                        break;
                    }
                }
                if (is_co_polarised(outcome))
                    ++c.co;
                else
                    ++c.cross;
            }
            return c;
        });
    CoincidenceTable table{basis, 0, 0, cfg.n_pairs};
    for (const auto& c : partials) {
        table.co_counts += c.co;
        table.cross_counts += c.cross;
    }
    return table;
}

/// Histogram of exciton emission times; bin i covers [i·w, (i+1)·w).
struct LifetimeHistogram {
    double bin_width = 1.0; // ps
    std::vector<double> counts;

    double bin_center(std::size_t i) const { return (static_cast<double>(i) + 0.5) * bin_width; }
};

/// Emission-time histogram of all dot-origin pairs. Background pairs carry no
/// timing and are excluded; times past the last bin are dropped.
inline LifetimeHistogram simulate_lifetime_trace(const SimConfig& cfg, double bin_width,
                                                 std::size_t n_bins) {
    cfg.validate();
    if (!(bin_width > 0.0)) throw DomainError("bin width must be positive");
    const EventSampler sample(cfg.params);
    auto partials = detail::run_blocks<std::vector<std::uint64_t>>(
        cfg, [&](std::uint64_t block, std::uint64_t, std::uint64_t count) {
            RandomStream rng(derive_seed(cfg.seed, {block}));
            std::vector<std::uint64_t> h(n_bins, 0);
            for (std::uint64_t i = 0; i < count; ++i) {
                const PairEvent e = sample(rng);
                if (e.category == EventCategory::Background) continue;
                const double bin = std::floor(e.emission_time / bin_width);
                if (bin < static_cast<double>(n_bins)) ++h[static_cast<std::size_t>(bin)];
            }
            return h;
        });
    LifetimeHistogram out{bin_width, std::vector<double>(n_bins, 0.0)};
    for (const auto& h : partials)
        for (std::size_t i = 0; i < n_bins; ++i) out.counts[i] += static_cast<double>(h[i]);
    return out;
}

struct VisibilityPoint {
    double delay = 0.0; // ps
    double visibility = 0.0;
};

/// Michelson fringe visibility exp(−d/τ₂) with additive Gaussian noise,
/// clamped to [0, 1].
inline std::vector<VisibilityPoint> simulate_visibility_curve(double tau2, std::span<const double> delays,
                                                              double noise_sigma, std::uint64_t seed) {
    if (!(tau2 > 0.0)) throw DomainError("tau2 must be positive");
    if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
    RandomStream rng(derive_seed(seed, {0x76697369ULL}));
    std::vector<VisibilityPoint> out;
    out.reserve(delays.size());
    for (double d : delays) {
        if (!(d >= 0.0)) throw DomainError("delays must be non-negative");
        double v = std::exp(-d / tau2);
        if (noise_sigma > 0.0) v += noise_sigma * rng.normal();
        out.push_back({d, std::clamp(v, 0.0, 1.0)});
    }
    return out;
}

} // namespace cascade
