#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "least_squares.hpp"
#include "model.hpp"
#include "monte_carlo.hpp"
#include "polarisation.hpp"

namespace cascade {

struct CorrelationDegree {
    Basis basis = Basis::Rectilinear;
    double c = 0.0;
    double sigma_c = 0.0;
};

/// (co − cross)/(co + cross) with binomial error 2·√(co·cross/(co+cross)³).
inline CorrelationDegree correlation_degree(const CoincidenceTable& t) {
    const double co = static_cast<double>(t.co_counts);
    const double cross = static_cast<double>(t.cross_counts);
    const double total = co + cross;
    if (total <= 0.0)
        throw StatisticError("degree of correlation undefined: no coincidences in " +
                             std::string(to_string(t.basis)) + " basis");
    return {t.basis, (co - cross) / total, 2.0 * std::sqrt(co * cross / (total * total * total))};
}

struct FidelityEstimate {
    double f = 0.0;
    double sigma_f = 0.0;
};

/// f = (1 + c_rect + c_diag − c_circ)/4. Arguments may come in any order but
/// must cover the three bases exactly once. Assumes an unpolarised source.
inline FidelityEstimate fidelity_from_correlations(const CorrelationDegree& a, const CorrelationDegree& b,
                                                   const CorrelationDegree& c) {
    std::array<const CorrelationDegree*, 3> by_basis{};
    for (const CorrelationDegree* d : {&a, &b, &c}) {
        auto& slot = by_basis[static_cast<std::size_t>(d->basis)];
        if (slot) throw UsageError("duplicate basis: " + std::string(to_string(d->basis)));
        slot = d;
    }
    const auto& rect = *by_basis[0];
    const auto& diag = *by_basis[1];
    const auto& circ = *by_basis[2];
    return {(1.0 + rect.c + diag.c - circ.c) / 4.0,
            0.25 * std::sqrt(rect.sigma_c * rect.sigma_c + diag.sigma_c * diag.sigma_c +
                             circ.sigma_c * circ.sigma_c)};
}

struct FidelityPoint {
    double S = 0.0;       // μeV
    double sigma_S = 0.0; // μeV
    double f = 0.0;
    double sigma_f = 0.0;
};

enum class FitKind { Lorentzian, Exponential, VisibilityDecay };

inline std::string_view to_string(FitKind k) {
    switch (k) {
    case FitKind::Lorentzian: return "lorentzian";
    case FitKind::Exponential: return "exponential";
    case FitKind::VisibilityDecay: return "visibility";
    }
    return "?";
}

struct FitResult {
    FitKind kind = FitKind::Lorentzian;
    std::vector<std::string> names;
    Eigen::VectorXd values;
    Eigen::VectorXd sigmas;
    Eigen::MatrixXd covariance;
    double chi2 = 0.0;
    int dof = 0;
    double chi2_reduced = 0.0;
    int iterations = 0;
    /// True when sigmas were rescaled by the residual variance (unweighted fits).
    bool covariance_scaled = false;
    std::size_t n_points = 0;

    std::size_t index_of(std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return i;
        throw UsageError("fit has no parameter '" + std::string(name) + "'");
    }
    double value(std::string_view name) const { return values(static_cast<Eigen::Index>(index_of(name))); }
    double sigma(std::string_view name) const { return sigmas(static_cast<Eigen::Index>(index_of(name))); }
    double cov(std::string_view a, std::string_view b) const {
        return covariance(static_cast<Eigen::Index>(index_of(a)), static_cast<Eigen::Index>(index_of(b)));
    }
};

namespace detail {

inline FitResult make_fit_result(FitKind kind, std::vector<std::string> names, const LeastSquaresSolution& sol,
                                 std::size_t n_points, bool scale_by_residuals) {
    FitResult r;
    r.kind = kind;
    r.names = std::move(names);
    r.values = sol.params;
    r.chi2 = sol.chi2;
    r.n_points = n_points;
    r.dof = static_cast<int>(n_points) - static_cast<int>(sol.params.size());
    r.chi2_reduced = r.dof > 0 ? sol.chi2 / r.dof : 0.0;
    r.iterations = sol.iterations;
    r.covariance = sol.covariance;
    if (scale_by_residuals && r.dof > 0) {
        r.covariance *= r.chi2_reduced;
        r.covariance_scaled = true;
    }
    r.sigmas = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return r;
}

/// Least-squares line through (x, log y) for y > 0; returns (intercept, slope).
inline std::pair<double, double> log_linear_fit(std::span<const double> x, std::span<const double> y,
                                                std::span<const double> w) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(y[i] > 0.0)) continue;
        const double ly = std::log(y[i]);
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * ly;
        sxx += w[i] * x[i] * x[i];
        sxy += w[i] * x[i] * ly;
    }
    const double det = sw * sxx - sx * sx;
    if (!(det > 0.0)) throw FitError("log-linear initial guess is degenerate", 0);
    const double slope = (sw * sxy - sx * sy) / det;
    return {(sy - slope * sx) / sw, slope};
}

/// Replaces non-positive sigmas by the smallest positive one. Returns false
/// (leaving unit sigmas) when no point carries an uncertainty.
inline bool regularise_sigmas(std::vector<double>& sigma) {
    double smallest = kInfinity;
    for (double s : sigma)
        if (s > 0.0) smallest = std::min(smallest, s);
    if (std::isinf(smallest)) {
        std::fill(sigma.begin(), sigma.end(), 1.0);
        return false;
    }
    for (double& s : sigma)
        if (!(s > 0.0)) s = smallest;
    return true;
}

inline double lorentzian_value(double S, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> grad) {
    const double center = p(0), fwhm = p(1), peak = p(2), baseline = p(3);
    const double u = 2.0 * (S - center) / fwhm;
    const double L = 1.0 / (1.0 + u * u);
    const double amp = peak - baseline;
    grad(0) = amp * 4.0 * u * L * L / fwhm;
    grad(1) = amp * 2.0 * u * u * L * L / fwhm;
    grad(2) = L;
    grad(3) = 1.0 - L;
    return baseline + amp * L;
}

} // namespace detail

/// baseline + (peak − baseline)/(1 + (2(S − center)/fwhm)²)
inline double lorentzian(double S, double center, double fwhm, double peak, double baseline) {
    const double u = 2.0 * (S - center) / fwhm;
    return baseline + (peak - baseline) / (1.0 + u * u);
}

/// Weighted Lorentzian fit of fidelity against splitting. Splitting
/// uncertainties enter through effective variances σ_f² + (∂f/∂S)²σ_S²,
/// re-evaluated at the current estimate until the weights settle.
inline FitResult fit_lorentzian(std::span<const FidelityPoint> points) {
    if (points.size() < 5) throw UsageError("Lorentzian fit needs at least 5 points");
    std::vector<FidelityPoint> pts(points.begin(), points.end());
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.S < b.S; });
    if (!(pts.back().S > pts.front().S)) throw UsageError("splitting values have no spread");

    const std::size_t n = pts.size();
    std::vector<double> S(n), f(n), sigma_f(n);
    for (std::size_t i = 0; i < n; ++i) {
        S[i] = pts[i].S;
        f[i] = pts[i].f;
        sigma_f[i] = pts[i].sigma_f;
    }
    const bool weighted = detail::regularise_sigmas(sigma_f);

    // Initial guesses: peak at the largest point, baseline from the outermost
    // quartile, width from the half-maximum crossings.
    const std::size_t imax = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
    const double center0 = S[imax];
    const double peak0 = f[imax];
    std::vector<std::size_t> by_distance(n);
    std::iota(by_distance.begin(), by_distance.end(), 0);
    std::sort(by_distance.begin(), by_distance.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(S[a] - center0) > std::abs(S[b] - center0);
    });
    const std::size_t quartile = std::max<std::size_t>(1, n / 4);
    double baseline0 = 0.0;
    for (std::size_t i = 0; i < quartile; ++i) baseline0 += f[by_distance[i]];
    baseline0 /= static_cast<double>(quartile);
    if (!(peak0 - baseline0 > 0.0))
        throw FitError("no peak above baseline: width is unidentifiable", 0);

    const double half = 0.5 * (peak0 + baseline0);
    auto crossing = [&](int dir) -> std::optional<double> {
        for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(imax);
             i + dir >= 0 && i + dir < static_cast<std::ptrdiff_t>(n); i += dir) {
            const auto j = static_cast<std::size_t>(i + dir);
            const auto k = static_cast<std::size_t>(i);
            if (f[j] <= half) return S[k] + (S[j] - S[k]) * (f[k] - half) / (f[k] - f[j]);
        }
        return std::nullopt;
    };
    const auto left = crossing(-1);
    const auto right = crossing(+1);
    double fwhm0;
    if (left && right)
        fwhm0 = *right - *left;
    else if (left || right)
        fwhm0 = 2.0 * std::abs((left ? *left : *right) - center0);
    else
        fwhm0 = 0.5 * (S.back() - S.front());
    if (!(fwhm0 > 0.0)) fwhm0 = 0.5 * (S.back() - S.front());

    Eigen::VectorXd p(4);
    p << center0, fwhm0, peak0, baseline0;
    LeastSquaresOptions opt;
    opt.admissible = [](const Eigen::VectorXd& q) { return q(1) > 0.0; };

    const bool has_s_errors =
        std::any_of(pts.begin(), pts.end(), [](const FidelityPoint& q) { return q.sigma_S > 0.0; });
    std::vector<double> sigma_eff = sigma_f;
    LeastSquaresSolution sol;
    Eigen::VectorXd grad(4);
    for (int pass = 0; pass < (has_s_errors ? 8 : 1); ++pass) {
        sol = levenberg_marquardt(S, f, sigma_eff, p, detail::lorentzian_value, opt);
        const double shift = ((sol.params - p).cwiseAbs().array() /
                              p.cwiseAbs().array().max(1e-300)).maxCoeff();
        p = sol.params;
        if (!has_s_errors) break;
        for (std::size_t i = 0; i < n; ++i) {
            detail::lorentzian_value(S[i], p, grad);
            const double dfds = -grad(0);
            sigma_eff[i] = std::sqrt(sigma_f[i] * sigma_f[i] + dfds * dfds * pts[i].sigma_S * pts[i].sigma_S);
        }
        if (pass > 0 && shift < 1e-8) break;
    }
    return detail::make_fit_result(FitKind::Lorentzian, {"center", "fwhm", "peak", "baseline"}, sol, n,
                                   !weighted);
}

/// Fits A·exp(−t/τ) + offset to a lifetime histogram with Poisson weights
/// σ = √count; empty bins are excluded.
inline FitResult fit_exponential(std::span<const double> times, std::span<const double> counts) {
    if (times.size() != counts.size()) throw UsageError("times and counts lengths differ");
    std::vector<double> t, y, sigma;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (!(counts[i] > 0.0)) continue;
        t.push_back(times[i]);
        y.push_back(counts[i]);
        sigma.push_back(std::sqrt(counts[i]));
    }
    if (t.size() < 5) throw UsageError("exponential fit needs at least 5 non-empty bins");

    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) w[i] = y[i];
    const auto [intercept, slope] = detail::log_linear_fit(t, y, w);
    if (!(slope < 0.0)) throw FitError("histogram does not decay", 0);

    Eigen::VectorXd p(3);
    p << std::exp(intercept), -1.0 / slope, 0.0;
    LeastSquaresOptions opt;
    opt.admissible = [](const Eigen::VectorXd& q) { return q(1) > 0.0; };
    const CurveModel model = [](double x, const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> g) {
        const double e = std::exp(-x / q(1));
        g(0) = e;
        g(1) = q(0) * e * x / (q(1) * q(1));
        g(2) = 1.0;
        return q(0) * e + q(2);
    };
    const auto sol = levenberg_marquardt(t, y, sigma, p, model, opt);
    return detail::make_fit_result(FitKind::Exponential, {"amplitude", "tau", "offset"}, sol, t.size(), false);
}

/// Histogram form: bins are evaluated at their centres.
inline FitResult fit_exponential(const LifetimeHistogram& h) {
    std::vector<double> t(h.counts.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = h.bin_center(i);
    return fit_exponential(t, h.counts);
}

/// Fits V(d) = V₀·exp(−d/τ₂). Points carry no individual errors, so the
/// covariance is scaled by the residual variance.
inline FitResult fit_visibility(std::span<const VisibilityPoint> points) {
    if (points.size() < 4) throw UsageError("visibility fit needs at least 4 points");
    std::vector<double> d, v, w;
    for (const auto& pt : points) {
        if (!(pt.delay >= 0.0)) throw DomainError("delays must be non-negative");
        d.push_back(pt.delay);
        v.push_back(pt.visibility);
        w.push_back(pt.visibility > 0.0 ? pt.visibility * pt.visibility : 0.0);
    }
    const auto [intercept, slope] = detail::log_linear_fit(d, v, w);
    if (!(slope < 0.0)) throw FitError("visibility does not decay", 0);

    Eigen::VectorXd p(2);
    p << -1.0 / slope, std::exp(intercept);
    std::vector<double> sigma(d.size(), 1.0);
    LeastSquaresOptions opt;
    opt.admissible = [](const Eigen::VectorXd& q) { return q(0) > 0.0; };
    const CurveModel model = [](double x, const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> g) {
        const double e = std::exp(-x / q(0));
        g(0) = q(1) * e * x / (q(0) * q(0));
        g(1) = e;
        return q(1) * e;
    };
    const auto sol = levenberg_marquardt(d, v, sigma, p, model, opt);
    return detail::make_fit_result(FitKind::VisibilityDecay, {"tau2", "amplitude"}, sol, d.size(), true);
}

/// τ₂* from 1/τ₂ = 1/(2τ₁) + 1/τ₂*.
inline double pure_dephasing_from_coherence(double tau2, double tau1) {
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) throw DomainError("tau1 and tau2 must be positive");
    if (!(tau2 < 2.0 * tau1))
        throw DomainError("coherence time cannot reach the radiative limit 2·tau1");
    return 1.0 / (1.0 / tau2 - 1.0 / (2.0 * tau1));
}

struct CrossDephasingInput {
    double f_max = 0.0;
    double sigma_f_max = 0.0;
    double f_min = 0.0;
    double sigma_f_min = 0.0;
    double cov_max_min = 0.0; // covariance of the two fidelities, e.g. from a joint fit
    double tau1 = 891.0;      // ps
    /// Exactly one partition of k·g_ss is used: an explicit k (g_ss then
    /// follows from f_min) or otherwise an assumed g_ss (default 1).
    std::optional<double> assumed_k;
    double assumed_g_ss = 1.0;
};

struct CrossDephasingInference {
    bool is_lower_bound = false;
    double tau_hv = kInfinity;       // ps; point estimate or lower bound
    double sigma_tau_hv = 0.0;       // ps; point estimates only
    double deficit = 0.0;            // predicted no-dephasing peak − f_max
    double sigma_deficit = 0.0;
    double predicted_f_max = 0.0;
    double k = 1.0;
    double g_ss = 1.0;
    double g_hv = 1.0;
    std::string assumption;
};

/// Infers the cross-dephasing time from the gap between the measured peak
/// fidelity and the peak implied by the measured base fidelity.
inline CrossDephasingInference infer_cross_dephasing(const CrossDephasingInput& in) {
    if (!(in.tau1 > 0.0)) throw DomainError("tau1 must be positive");
    if (in.sigma_f_max < 0.0 || in.sigma_f_min < 0.0) throw DomainError("sigmas must be non-negative");

    CrossDephasingInference out;
    const double kg = 4.0 * in.f_min - 1.0; // k·g_ss
    if (!(kg > 0.0)) throw DomainError("f_min must exceed 0.25 to carry any correlated emission");
    if (in.assumed_k) {
        out.k = *in.assumed_k;
        out.g_ss = kg / out.k;
        out.assumption = "k assumed = " + std::to_string(out.k) + ", g_ss from f_min";
    } else {
        out.g_ss = in.assumed_g_ss;
        out.k = kg / out.g_ss;
        out.assumption = "g_ss assumed = " + std::to_string(out.g_ss) + ", k from f_min";
    }
    // Estimates may exceed 1 by noise; only a 3σ excess is inconsistent.
    const double sigma_kg = 4.0 * in.sigma_f_min;
    const bool k_ok = out.k > 0.0 && (out.k - 1.0) * out.g_ss <= 3.0 * sigma_kg + 1e-12;
    const bool g_ok = out.g_ss > 0.0 && (out.g_ss - 1.0) * out.k <= 3.0 * sigma_kg + 1e-12;
    if (!k_ok || !g_ok)
        throw DomainError("f_min is inconsistent with the assumed partition of k·g_ss (" + out.assumption + ")");

    out.predicted_f_max = 0.25 * (1.0 + 3.0 * kg);
    out.deficit = out.predicted_f_max - in.f_max;
    out.sigma_deficit = std::sqrt(std::max(0.0, in.sigma_f_max * in.sigma_f_max +
                                                    9.0 * in.sigma_f_min * in.sigma_f_min -
                                                    6.0 * in.cov_max_min));
    if (out.deficit < -3.0 * out.sigma_deficit)
        throw DomainError("inconsistent inputs: f_max exceeds the dephasing-free prediction by more than 3 sigma");

    // τ_HV as a function of (f_max, f_min) under the fixed assumption.
    auto tau_of = [&](double f_max, double f_min) {
        const double kg_ = 4.0 * f_min - 1.0;
        const double k = in.assumed_k ? *in.assumed_k : kg_ / in.assumed_g_ss;
        const double g_ss = kg_ / k;
        const double deficit = 0.25 * (1.0 + 3.0 * kg_) - f_max;
        const double g_hv = g_ss - 2.0 * deficit / k;
        if (!(g_hv > 0.0)) throw DomainError("deficit too large: implied cross-coherence is not positive");
        const double denom = 1.0 / g_hv - 1.0 / g_ss;
        return denom <= 0.0 ? kInfinity : in.tau1 / denom;
    };

    if (out.deficit <= out.sigma_deficit) {
        // Consistent with no cross-dephasing: bound from the 1σ-upper deficit.
        out.is_lower_bound = true;
        const double upper = std::max(out.deficit, 0.0) + out.sigma_deficit;
        out.g_hv = out.g_ss - 2.0 * upper / out.k;
        out.tau_hv = tau_of(out.predicted_f_max - upper, in.f_min);
        return out;
    }

    out.g_hv = out.g_ss - 2.0 * out.deficit / out.k;
    out.tau_hv = tau_of(in.f_max, in.f_min);
    const double h_max = std::max(1e-9, 1e-4 * in.sigma_f_max);
    const double h_min = std::max(1e-9, 1e-4 * in.sigma_f_min);
    const double d_max = (tau_of(in.f_max + h_max, in.f_min) - tau_of(in.f_max - h_max, in.f_min)) / (2 * h_max);
    const double d_min = (tau_of(in.f_max, in.f_min + h_min) - tau_of(in.f_max, in.f_min - h_min)) / (2 * h_min);
    out.sigma_tau_hv = std::sqrt(std::max(0.0, d_max * d_max * in.sigma_f_max * in.sigma_f_max +
                                                   d_min * d_min * in.sigma_f_min * in.sigma_f_min +
                                                   2.0 * d_max * d_min * in.cov_max_min));
    return out;
}

} // namespace cascade
