#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "model.hpp"
#include "monte_carlo.hpp"
#include "table_io.hpp"

namespace cascade {

struct MonteCarloSettings {
    std::uint64_t n_pairs = 100000; // per point and basis
    std::uint64_t seed = 1;
    unsigned shards = 1;
    unsigned threads = 0;
};

/// A splitting sweep at fixed remaining parameters. The S field of `params`
/// is ignored.
struct Scenario {
    std::string name;
    ModelParams params;
    std::vector<double> sweep; // μeV, sorted
    std::optional<MonteCarloSettings> mc;
    double sigma_S = 0.0; // μeV, attached to every fidelity point

    void validate() const {
        if (name.empty()) throw UsageError("scenario needs a name");
        if (sweep.empty()) throw UsageError("scenario '" + name + "' has an empty sweep");
        if (!std::is_sorted(sweep.begin(), sweep.end()))
            throw UsageError("scenario '" + name + "' sweep is not sorted");
        if (!(sigma_S >= 0.0)) throw UsageError("sigma_S must be non-negative");
        params.validate();
    }
};

inline std::vector<double> linear_grid(double from, double to, std::size_t points) {
    if (points == 0) throw UsageError("grid needs at least one point");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = points == 1 ? from : from + (to - from) * static_cast<double>(i) / static_cast<double>(points - 1);
    return g;
}

struct SweepRecord {
    double S = 0.0;
    double f_analytic = 0.0;
    double phase_z = 0.0;
    bool has_mc = false;
    double f_mc = std::numeric_limits<double>::quiet_NaN();
    double f_mc_sigma = std::numeric_limits<double>::quiet_NaN();
    std::array<CorrelationDegree, 3> correlations{};
    /// |f_analytic − f_mc| ≤ 5σ; always true without MC.
    bool consistent = true;
    std::string error;
};

/// Derives the per-point stream seed so that every point and basis draws from
/// its own substream.
inline std::uint64_t point_seed(std::uint64_t seed, std::size_t point) {
    return derive_seed(seed, {0x7377656570ULL, static_cast<std::uint64_t>(point)});
}

/// Counts → degrees of correlation → three-basis fidelity for one parameter set.
inline FidelityEstimate simulate_fidelity(const ModelParams& p, const MonteCarloSettings& mc, std::uint64_t seed,
                                          std::array<CorrelationDegree, 3>* correlations = nullptr) {
    SimConfig cfg{p, mc.n_pairs, seed, mc.shards, mc.threads, 1.0};
    std::array<CorrelationDegree, 3> c;
    for (Basis b : kAllBases) c[static_cast<std::size_t>(b)] = correlation_degree(measure_coincidences(cfg, b));
    if (correlations) *correlations = c;
    return fidelity_from_correlations(c[0], c[1], c[2]);
}

/// Evaluates every sweep point analytically and, when configured, through the
/// simulated measurement pipeline. Per-point failures are recorded in the
/// record and do not stop the run.
inline std::vector<SweepRecord> run_scenario(const Scenario& sc) {
    sc.validate();
    std::vector<SweepRecord> out;
    out.reserve(sc.sweep.size());
    for (std::size_t i = 0; i < sc.sweep.size(); ++i) {
        const ModelParams p = sc.params.with_splitting(sc.sweep[i]);
        SweepRecord r;
        r.S = sc.sweep[i];
        r.f_analytic = fidelity_analytic(p);
        r.phase_z = phase_of_z(p);
        if (sc.mc && sc.mc->n_pairs > 0) {
            try {
                const auto est = simulate_fidelity(p, *sc.mc, point_seed(sc.mc->seed, i), &r.correlations);
                r.has_mc = true;
                r.f_mc = est.f;
                r.f_mc_sigma = est.sigma_f;
                r.consistent = std::abs(r.f_analytic - r.f_mc) <= 5.0 * r.f_mc_sigma + 1e-12;
            } catch (const std::exception& e) {
                r.error = "point " + std::to_string(i) + ": " + e.what();
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> cols{"S_ueV", "f_analytic", "f_mc", "f_mc_sigma",
                                               "c_rect", "c_diag", "c_circ", "phase_z"};
    return cols;
}

inline Table records_to_table(const std::vector<SweepRecord>& records) {
    Table t{sweep_columns(), {}};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : records) {
        t.rows.push_back({r.S, r.f_analytic, r.has_mc ? r.f_mc : nan, r.has_mc ? r.f_mc_sigma : nan,
                          r.has_mc ? r.correlations[0].c : nan, r.has_mc ? r.correlations[1].c : nan,
                          r.has_mc ? r.correlations[2].c : nan, r.phase_z});
    }
    return t;
}

/// Simulated fidelity points of a sweep, ready for fit_lorentzian.
inline std::vector<FidelityPoint> fidelity_points(const std::vector<SweepRecord>& records, double sigma_S) {
    std::vector<FidelityPoint> pts;
    for (const auto& r : records)
        if (r.has_mc) pts.push_back({r.S, sigma_S, r.f_mc, r.f_mc_sigma});
    return pts;
}

/// Parameters reproducing a measured (f_max, fwhm, τ₁) triple.
///
/// The width fixes g_hv = 2ħ/(τ₁·fwhm). Spin scattering is taken as absent
/// (g_ss = 1), so k = (4·f_max − 1)/(1 + 2·g_hv) and τ_HV follows from g_hv.
/// When that k exceeds 1 the requested peak is out of reach of any valid
/// state with this width; k is clamped to 1 and the reachable peak reported.
struct ParameterSolution {
    ModelParams params;
    double target_f_max = 0.0;
    double target_fwhm = 0.0;
    double achieved_f_max = 0.0;
    bool f_max_clamped = false;
};

inline ParameterSolution solve_parameters(double f_max, double fwhm, double tau1) {
    if (!(tau1 > 0.0) || !(fwhm > 0.0)) throw DomainError("tau1 and fwhm must be positive");
    const double g_hv = 2.0 * kHbar / (tau1 * fwhm);
    if (!(g_hv <= 1.0)) throw DomainError("fwhm is narrower than the radiative limit 2ħ/τ₁");
    ParameterSolution s;
    s.target_f_max = f_max;
    s.target_fwhm = fwhm;
    double k = (4.0 * f_max - 1.0) / (1.0 + 2.0 * g_hv);
    if (!(k > 0.0)) throw DomainError("f_max must exceed 0.25");
    if (k > 1.0) {
        k = 1.0;
        s.f_max_clamped = true;
    }
    s.params.tau1 = tau1;
    s.params.tau_ss = kInfinity;
    s.params.tau_hv = tau_hv_for_coherence(tau1, kInfinity, g_hv);
    s.params.k = k;
    s.achieved_f_max = fidelity_extrema_and_width(s.params).f_max;
    return s;
}

/// Dot A: f_max 0.75, fwhm 3.3 μeV, τ₁ 891 ps.
inline ParameterSolution dotA_solution() { return solve_parameters(0.75, 3.3, 891.0); }
inline ModelParams dotA_parameter_solution() { return dotA_solution().params; }

/// Dot B: f_max 0.74, fwhm 4.2 μeV, τ₁ 881 ps.
inline ParameterSolution dotB_solution() { return solve_parameters(0.74, 4.2, 881.0); }
inline ModelParams dotB_parameter_solution() { return dotB_solution().params; }

/// Cross-coherence of the dephasing-only curve in the fidelity-vs-splitting
/// family; places the crossover with the ideal curve near 1 μeV.
inline constexpr double kFig2DephasedCoherence = 0.546;

inline std::vector<std::string> builtin_scenario_names() {
    return {"fig2a_ideal", "fig2a_dephasing", "fig2a_spin_scatter", "fig2a_background",
            "fig2b_phase", "fig3_dotA",       "fig3_dotB"};
}

inline Scenario builtin_scenario(const std::string& name) {
    Scenario sc;
    sc.name = name;
    sc.params = ModelParams{};
    sc.sweep = linear_grid(0.0, 5.0, 51);
    if (name == "fig2a_ideal" || name == "fig2b_phase") {
    } else if (name == "fig2a_dephasing") {
        sc.params.tau_hv = tau_hv_for_coherence(sc.params.tau1, kInfinity, kFig2DephasedCoherence);
    } else if (name == "fig2a_spin_scatter") {
        sc.params.tau_ss = sc.params.tau1; // g_ss = 0.5
    } else if (name == "fig2a_background") {
        sc.params.k = 0.5;
    } else if (name == "fig3_dotA" || name == "fig3_dotB") {
        sc.params = name == "fig3_dotA" ? dotA_parameter_solution() : dotB_parameter_solution();
        sc.sweep = linear_grid(-10.0, 10.0, 41);
        sc.mc = MonteCarloSettings{};
    } else {
        std::string known;
        for (const auto& n : builtin_scenario_names()) known += " " + n;
        throw UsageError("unknown scenario '" + name + "'; known:" + known);
    }
    return sc;
}

namespace detail {

inline double json_time(const nlohmann::json& j, const char* key, double fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (v.is_null()) return kInfinity;
    if (v.is_string()) {
        if (v.get<std::string>() == "inf") return kInfinity;
        throw DataError(std::string("params.") + key + ": expected a number, null or \"inf\"");
    }
    if (!v.is_number()) throw DataError(std::string("params.") + key + ": expected a number");
    return v.get<double>();
}

inline nlohmann::json time_to_json(double t) {
    return std::isinf(t) ? nlohmann::json("inf") : nlohmann::json(t);
}

} // namespace detail

/// Scenario document:
///   name          string
///   params        {tau1_ps, tau_ss_ps, tau_hv_ps, k}; times may be "inf" or null
///   targets       {f_max, fwhm_ueV, tau1_ps}   (alternative to params)
///   sweep         [S_ueV, ...] or {from_ueV, to_ueV, points}
///   sigma_S_ueV   optional
///   mc            optional {n_pairs, seed, shards}
inline Scenario scenario_from_json(const nlohmann::json& j) {
    try {
        Scenario sc;
        sc.name = j.at("name").get<std::string>();
        if (j.contains("targets")) {
            const auto& t = j.at("targets");
            sc.params = solve_parameters(t.at("f_max").get<double>(), t.at("fwhm_ueV").get<double>(),
                                         t.at("tau1_ps").get<double>())
                            .params;
        } else {
            const auto& p = j.at("params");
            sc.params.tau1 = p.value("tau1_ps", 891.0);
            sc.params.tau_ss = detail::json_time(p, "tau_ss_ps", kInfinity);
            sc.params.tau_hv = detail::json_time(p, "tau_hv_ps", kInfinity);
            sc.params.k = p.value("k", 1.0);
        }
        const auto& sw = j.at("sweep");
        if (sw.is_array())
            sc.sweep = sw.get<std::vector<double>>();
        else
            sc.sweep = linear_grid(sw.at("from_ueV").get<double>(), sw.at("to_ueV").get<double>(),
                                   sw.at("points").get<std::size_t>());
        sc.sigma_S = j.value("sigma_S_ueV", 0.0);
        if (j.contains("mc")) {
            const auto& m = j.at("mc");
            MonteCarloSettings mc;
            mc.n_pairs = m.value("n_pairs", mc.n_pairs);
            mc.seed = m.value("seed", mc.seed);
            mc.shards = m.value("shards", mc.shards);
            sc.mc = mc;
        }
        sc.validate();
        return sc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("scenario document: ") + e.what());
    } catch (const DomainError& e) {
        throw DataError(std::string("scenario document: ") + e.what());
    }
}

/// Fully resolved form, suitable for manifests; parses back to the same scenario.
inline nlohmann::json scenario_to_json(const Scenario& sc) {
    nlohmann::json j;
    j["name"] = sc.name;
    j["params"] = {{"tau1_ps", sc.params.tau1},
                   {"tau_ss_ps", detail::time_to_json(sc.params.tau_ss)},
                   {"tau_hv_ps", detail::time_to_json(sc.params.tau_hv)},
                   {"k", sc.params.k}};
    j["sweep"] = sc.sweep;
    j["sigma_S_ueV"] = sc.sigma_S;
    if (sc.mc) j["mc"] = {{"n_pairs", sc.mc->n_pairs}, {"seed", sc.mc->seed}, {"shards", sc.mc->shards}};
    return j;
}

struct CrossDephasingRoundTrip {
    FitResult fit;
    CrossDephasingInference inference;
};

/// Simulated sweep → Lorentzian fit → cross-dephasing inference. The
/// inference assumes g_ss = 1, which holds for params without spin scattering.
inline CrossDephasingRoundTrip cross_dephasing_round_trip(const ModelParams& p, const MonteCarloSettings& mc,
                                                          std::vector<double> sweep = linear_grid(-10.0, 10.0, 41)) {
    Scenario sc{"cross_dephasing_round_trip", p, std::move(sweep), mc, 0.0};
    const auto records = run_scenario(sc);
    const auto pts = fidelity_points(records, sc.sigma_S);
    CrossDephasingRoundTrip out;
    out.fit = fit_lorentzian(pts);
    CrossDephasingInput in;
    in.f_max = out.fit.value("peak");
    in.sigma_f_max = out.fit.sigma("peak");
    in.f_min = out.fit.value("baseline");
    in.sigma_f_min = out.fit.sigma("baseline");
    in.cov_max_min = out.fit.cov("peak", "baseline");
    in.tau1 = p.tau1;
    out.inference = infer_cross_dephasing(in);
    return out;
}

// ---------------------------------------------------------------------------
// Plot-ready tables, one per figure panel.

struct FigureOptions {
    std::uint64_t seed = 1;
    std::uint64_t n_pairs = 100000;
    unsigned shards = 1;
    unsigned threads = 0;
};

inline std::vector<std::string> figure_ids() {
    return {"fig2a", "fig2b", "fig3", "fig3_inset", "fig4a", "fig4b"};
}

/// Cross-coherence values of the phase-of-z family.
inline std::vector<double> fig2b_coherences() { return {1.0, 0.75, 0.5, 0.25}; }

inline std::string coherence_label(double g) {
    return g == std::floor(g) ? fmt::format("{:.1f}", g) : fmt::format("{}", g);
}

inline Table figure_table(const std::string& id, const FigureOptions& opt = {}) {
    const MonteCarloSettings mc{opt.n_pairs, opt.seed, opt.shards, opt.threads};
    if (id == "fig2a") {
        const std::array<std::string, 4> names{"fig2a_ideal", "fig2a_dephasing", "fig2a_spin_scatter",
                                               "fig2a_background"};
        Table t{{"S_ueV", "f_ideal", "f_dephasing", "f_spin_scatter", "f_background"}, {}};
        const auto grid = builtin_scenario(names[0]).sweep;
        for (double S : grid) {
            std::vector<double> row{S};
            for (const auto& n : names) row.push_back(fidelity_analytic(builtin_scenario(n).params.with_splitting(S)));
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    if (id == "fig2b") {
        Table t{{"S_ueV"}, {}};
        const auto gs = fig2b_coherences();
        for (double g : gs) t.columns.push_back("phase_rad_g" + coherence_label(g));
        const ModelParams base{};
        for (double S : builtin_scenario("fig2b_phase").sweep) {
            std::vector<double> row{S};
            for (double g : gs) {
                ModelParams p = base.with_splitting(S);
                p.tau_hv = tau_hv_for_coherence(p.tau1, p.tau_ss, g);
                row.push_back(phase_of_z(p));
            }
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    if (id == "fig3") {
        Table t{{"S_ueV", "f_mc_A", "f_mc_sigma_A", "fit_A", "f_mc_B", "f_mc_sigma_B", "fit_B"}, {}};
        std::array<std::vector<SweepRecord>, 2> recs;
        std::array<FitResult, 2> fits;
        for (int d = 0; d < 2; ++d) {
            Scenario sc = builtin_scenario(d == 0 ? "fig3_dotA" : "fig3_dotB");
            sc.mc = mc;
            recs[d] = run_scenario(sc);
            fits[d] = fit_lorentzian(fidelity_points(recs[d], sc.sigma_S));
        }
        for (std::size_t i = 0; i < recs[0].size(); ++i) {
            std::vector<double> row{recs[0][i].S};
            for (int d = 0; d < 2; ++d) {
                const auto& f = fits[d];
                row.push_back(recs[d][i].f_mc);
                row.push_back(recs[d][i].f_mc_sigma);
                row.push_back(lorentzian(recs[d][i].S, f.value("center"), f.value("fwhm"), f.value("peak"),
                                         f.value("baseline")));
            }
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    if (id == "fig3_inset") {
        Table t{{"S_ueV", "c_rect", "c_rect_sigma", "c_diag", "c_diag_sigma", "c_circ", "c_circ_sigma"}, {}};
        Scenario sc = builtin_scenario("fig3_dotA");
        sc.mc = mc;
        for (const auto& r : run_scenario(sc)) {
            std::vector<double> row{r.S};
            for (const auto& c : r.correlations) {
                row.push_back(c.c);
                row.push_back(c.sigma_c);
            }
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    if (id == "fig4a") {
        SimConfig cfg{dotA_parameter_solution(), std::max<std::uint64_t>(opt.n_pairs, 1000000),
                      derive_seed(opt.seed, {0x66696734ULL}), opt.shards, opt.threads, 1.0};
        const auto h = simulate_lifetime_trace(cfg, 50.0, 100);
        const auto fit = fit_exponential(h);
        Table t{{"t_ps", "counts", "fit_value"}, {}};
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            const double tc = h.bin_center(i);
            t.rows.push_back({tc, h.counts[i],
                              fit.value("amplitude") * std::exp(-tc / fit.value("tau")) + fit.value("offset")});
        }
        return t;
    }
    if (id == "fig4b") {
        const auto delays = linear_grid(0.0, 400.0, 21);
        const auto pts = simulate_visibility_curve(88.0, delays, 0.02, opt.seed);
        const auto fit = fit_visibility(pts);
        Table t{{"delay_ps", "visibility", "fit_value"}, {}};
        for (const auto& p : pts)
            t.rows.push_back({p.delay, p.visibility, fit.value("amplitude") * std::exp(-p.delay / fit.value("tau2"))});
        return t;
    }
    std::string known;
    for (const auto& n : figure_ids()) known += " " + n;
    throw UsageError("unknown figure id '" + id + "'; known:" + known);
}

} // namespace cascade
