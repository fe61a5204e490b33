#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cascade/analysis.hpp"
#include "cascade/experiments.hpp"
#include "oracles.hpp"

using namespace cascade;

namespace {

CoincidenceTable table(Basis b, std::uint64_t co, std::uint64_t cross) { return {b, co, cross, co + cross}; }

CorrelationDegree degree(Basis b, double c, double s = 0.0) { return {b, c, s}; }

std::vector<FidelityPoint> analytic_sweep(const ModelParams& p, double half_span, int n) {
    std::vector<FidelityPoint> pts;
    for (int i = 0; i < n; ++i) {
        const double S = -half_span + 2.0 * half_span * i / (n - 1);
        pts.push_back({S, 0.0, fidelity_analytic(p.with_splitting(S)), 0.0});
    }
    return pts;
}

} // namespace

TEST(CorrelationDegree, Examples) {
    auto d = correlation_degree(table(Basis::Rectilinear, 100, 0));
    EXPECT_EQ(d.c, 1.0);
    EXPECT_EQ(d.sigma_c, 0.0);
    d = correlation_degree(table(Basis::Diagonal, 75, 25));
    EXPECT_DOUBLE_EQ(d.c, 0.5);
    EXPECT_NEAR(d.sigma_c, 0.08660254037844387, 1e-15);
    EXPECT_EQ(correlation_degree(table(Basis::Circular, 40, 40)).c, 0.0);
    EXPECT_THROW(correlation_degree(table(Basis::Circular, 0, 0)), StatisticError);
}

TEST(CorrelationDegree, AntisymmetricUnderSwap) {
    oracle::ParamGenerator gen(8);
    for (int i = 0; i < 200; ++i) {
        const auto a = static_cast<std::uint64_t>(gen.uniform(0, 1e6));
        const auto b = static_cast<std::uint64_t>(gen.uniform(1, 1e6));
        const auto x = correlation_degree(table(Basis::Rectilinear, a, b));
        const auto y = correlation_degree(table(Basis::Rectilinear, b, a));
        ASSERT_EQ(x.c, -y.c);
        ASSERT_EQ(x.sigma_c, y.sigma_c);
        ASSERT_LE(std::abs(x.c), 1.0);
    }
}

TEST(FidelityFromCorrelations, Examples) {
    auto f = fidelity_from_correlations(degree(Basis::Rectilinear, 1), degree(Basis::Diagonal, 1),
                                        degree(Basis::Circular, -1));
    EXPECT_EQ(f.f, 1.0);
    f = fidelity_from_correlations(degree(Basis::Rectilinear, 1), degree(Basis::Diagonal, 0),
                                   degree(Basis::Circular, 0));
    EXPECT_EQ(f.f, 0.5);
    f = fidelity_from_correlations(degree(Basis::Circular, 0), degree(Basis::Rectilinear, 0),
                                   degree(Basis::Diagonal, 0));
    EXPECT_EQ(f.f, 0.25);
    f = fidelity_from_correlations(degree(Basis::Rectilinear, 0.5, 0.03), degree(Basis::Diagonal, 0.2, 0.04),
                                   degree(Basis::Circular, -0.1, 0.12));
    EXPECT_DOUBLE_EQ(f.sigma_f, 0.25 * 0.13);
}

TEST(FidelityFromCorrelations, DuplicateBasisIsUsageError) {
    EXPECT_THROW(fidelity_from_correlations(degree(Basis::Rectilinear, 1), degree(Basis::Rectilinear, 1),
                                            degree(Basis::Circular, -1)),
                 UsageError);
}

TEST(FidelityFromCorrelations, PauliExpectationsReproduceAnalyticFidelity) {
    oracle::ParamGenerator gen(9);
    for (int i = 0; i < 1000; ++i) {
        const ModelParams p = gen();
        const auto rho = density_matrix(p);
        const auto c = coherence_fractions(p);
        // Direct matrix traces against Pauli products, and the closed forms.
        const double rect = expected_correlation(rho, Basis::Rectilinear);
        const double diag = expected_correlation(rho, Basis::Diagonal);
        const double circ = expected_correlation(rho, Basis::Circular);
        ASSERT_NEAR(rect, p.k * c.g_ss, 1e-12);
        ASSERT_NEAR(diag, p.k * c.g_hv / (1 + c.x * c.x), 1e-12);
        ASSERT_NEAR(circ, -p.k * c.g_hv / (1 + c.x * c.x), 1e-12);
        const auto f = fidelity_from_correlations(degree(Basis::Rectilinear, rect), degree(Basis::Diagonal, diag),
                                                  degree(Basis::Circular, circ));
        ASSERT_NEAR(f.f, fidelity_analytic(p), 1e-12);
    }
}

TEST(FidelityFromCorrelations, SimulatedBellStateWithinThreeSigma) {
    ModelParams p;
    const auto est = simulate_fidelity(p, MonteCarloSettings{1000000, 5, 1, 0}, 5);
    EXPECT_LE(std::abs(est.f - 1.0), 3.0 * est.sigma_f);
}

TEST(FitLorentzian, RecoversExactModelToOnePermille) {
    oracle::ParamGenerator gen(10);
    for (int i = 0; i < 40; ++i) {
        ModelParams p = gen();
        p.k = gen.uniform(0.2, 1.0);
        const auto e = fidelity_extrema_and_width(p);
        const auto fit = fit_lorentzian(analytic_sweep(p, 3.0 * e.fwhm, 21));
        ASSERT_NEAR(fit.value("fwhm"), e.fwhm, 1e-3 * e.fwhm);
        ASSERT_NEAR(fit.value("peak"), e.f_max, 1e-3 * e.f_max);
        ASSERT_NEAR(fit.value("baseline"), e.f_min, 1e-3 * e.f_min);
        ASSERT_NEAR(fit.value("center"), 0.0, 1e-3 * e.fwhm);
    }
}

TEST(FitLorentzian, OffCentreAndUnsortedInput) {
    std::vector<FidelityPoint> pts;
    for (int i = 20; i >= 0; --i) {
        const double S = -4.0 + 0.5 * i;
        pts.push_back({S, 0.0, lorentzian(S, 1.3, 2.2, 0.8, 0.45), 0.0});
    }
    const auto fit = fit_lorentzian(pts);
    EXPECT_NEAR(fit.value("center"), 1.3, 1e-8);
    EXPECT_NEAR(fit.value("fwhm"), 2.2, 1e-8);
}

TEST(FitLorentzian, FlatDataIsFitFailure) {
    std::vector<FidelityPoint> pts;
    for (int i = 0; i < 11; ++i) pts.push_back({double(i), 0.0, 0.6, 0.01});
    EXPECT_THROW(fit_lorentzian(pts), FitError);
}

TEST(FitLorentzian, PreconditionErrors) {
    std::vector<FidelityPoint> few(4, FidelityPoint{0.0, 0.0, 0.5, 0.01});
    EXPECT_THROW(fit_lorentzian(few), UsageError);
    std::vector<FidelityPoint> same(6, FidelityPoint{1.0, 0.0, 0.5, 0.01});
    EXPECT_THROW(fit_lorentzian(same), UsageError);
}

TEST(FitLorentzian, SplittingErrorsWidenUncertainty) {
    const ModelParams p = dotA_parameter_solution();
    auto pts = analytic_sweep(p, 10.0, 41);
    for (auto& q : pts) q.sigma_f = 0.01;
    const auto plain = fit_lorentzian(pts);
    for (auto& q : pts) q.sigma_S = 0.5;
    const auto with_s = fit_lorentzian(pts);
    EXPECT_NEAR(with_s.value("fwhm"), 3.3, 1e-6);
    EXPECT_GT(with_s.sigma("fwhm"), plain.sigma("fwhm"));
    EXPECT_GT(with_s.sigma("peak"), plain.sigma("peak"));
}

TEST(FitLorentzian, UnbiasedOverReplicas) {
    // 100 noisy replicas at experiment-like error bars (σ_f = 0.02).
    const ModelParams p = dotA_parameter_solution();
    const auto e = fidelity_extrema_and_width(p);
    RandomStream rng(77);
    double sum_w = 0, sum_w2 = 0, sum_pk = 0, sum_pk2 = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        auto pts = analytic_sweep(p, 10.0, 41);
        for (auto& q : pts) {
            q.sigma_f = 0.02;
            q.f += 0.02 * rng.normal();
        }
        const auto fit = fit_lorentzian(pts);
        sum_w += fit.value("fwhm");
        sum_w2 += fit.value("fwhm") * fit.value("fwhm");
        sum_pk += fit.value("peak");
        sum_pk2 += fit.value("peak") * fit.value("peak");
    }
    auto check = [&](double s, double s2, double truth) {
        const double mean = s / reps;
        const double sd = std::sqrt(s2 / reps - mean * mean);
        EXPECT_NEAR(mean, truth, 2.0 * sd / std::sqrt(double(reps)));
    };
    check(sum_w, sum_w2, e.fwhm);
    check(sum_pk, sum_pk2, e.f_max);
}

TEST(FitExponential, ExactBinsRecoverLifetime) {
    LifetimeHistogram h{40.0, {}};
    for (int i = 0; i < 60; ++i) h.counts.push_back(5e4 * std::exp(-h.bin_center(i) / 891.0));
    const auto fit = fit_exponential(h);
    EXPECT_NEAR(fit.value("tau"), 891.0, 891.0 * 1e-6);
    EXPECT_NEAR(fit.value("offset"), 0.0, 1e-6);
}

TEST(FitExponential, SyntheticTracesWithinOnePercent) {
    for (double tau : {891.0, 881.0}) {
        ModelParams p;
        p.tau1 = tau;
        SimConfig cfg{p, 1000000, 31, 1, 0, 1.0};
        const auto fit = fit_exponential(simulate_lifetime_trace(cfg, 50.0, 100));
        EXPECT_NEAR(fit.value("tau"), tau, 0.01 * tau);
        EXPECT_GT(fit.sigma("tau"), 0.0);
        EXPECT_LT(fit.chi2_reduced, 2.0);
    }
}

TEST(FitExponential, TooFewBins) {
    LifetimeHistogram h{10.0, {100, 50, 0, 20, 0, 0, 5, 0}};
    EXPECT_THROW(fit_exponential(h), UsageError);
}

TEST(FitVisibility, NoiselessRecovery) {
    const auto delays = linear_grid(0.0, 300.0, 16);
    const auto pts = simulate_visibility_curve(88.0, delays, 0.0, 1);
    const auto fit = fit_visibility(pts);
    EXPECT_NEAR(fit.value("tau2"), 88.0, 88.0 * 1e-6);
    EXPECT_NEAR(fit.value("amplitude"), 1.0, 1e-6);
}

TEST(FitVisibility, NoisyRecoveryAtMeasuredScale) {
    const auto delays = linear_grid(0.0, 300.0, 16);
    const auto fit = fit_visibility(simulate_visibility_curve(88.0, delays, 0.02, 4));
    EXPECT_NEAR(fit.value("tau2"), 88.0, 7.0);
    EXPECT_LT(fit.sigma("tau2"), 7.0);
    const auto fit_b = fit_visibility(simulate_visibility_curve(110.0, linear_grid(0.0, 400.0, 21), 0.02, 5));
    EXPECT_NEAR(fit_b.value("tau2"), 110.0, 5.0);
}

TEST(FitVisibility, UnbiasedOverReplicas) {
    const auto delays = linear_grid(0.0, 300.0, 16);
    double s = 0, s2 = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const double t = fit_visibility(simulate_visibility_curve(88.0, delays, 0.02, 1000 + r)).value("tau2");
        s += t;
        s2 += t * t;
    }
    const double mean = s / reps;
    const double sd = std::sqrt(s2 / reps - mean * mean);
    EXPECT_NEAR(mean, 88.0, 2.0 * sd / std::sqrt(double(reps)));
}

TEST(FitVisibility, Preconditions) {
    std::vector<VisibilityPoint> three{{0, 1}, {10, 0.9}, {20, 0.8}};
    EXPECT_THROW(fit_visibility(three), UsageError);
    std::vector<VisibilityPoint> negative{{0, 1}, {-10, 0.9}, {20, 0.8}, {30, 0.7}};
    EXPECT_THROW(fit_visibility(negative), DomainError);
}

TEST(PureDephasing, Examples) {
    EXPECT_NEAR(pure_dephasing_from_coherence(88.0, 891.0), 92.57142857142858, 1e-9);
    EXPECT_GT(pure_dephasing_from_coherence(2 * 891.0 * (1 - 1e-9), 891.0), 1e11);
    EXPECT_NEAR(pure_dephasing_from_coherence(1.0, 1e6), 1.0, 1e-6);
    EXPECT_THROW(pure_dephasing_from_coherence(1782.0, 891.0), DomainError);
    EXPECT_THROW(pure_dephasing_from_coherence(2000.0, 891.0), DomainError);
}

TEST(InferCrossDephasing, ZeroDeficitMeansNoDephasing) {
    CrossDephasingInput in;
    in.f_min = 0.5;
    in.f_max = 1.0;
    const auto r = infer_cross_dephasing(in);
    EXPECT_TRUE(std::isinf(r.tau_hv));
    EXPECT_EQ(r.deficit, 0.0);
}

TEST(InferCrossDephasing, ExactInversionOfModel) {
    ModelParams p;
    p.tau_hv = 3000.0;
    p.k = 0.9;
    const auto e = fidelity_extrema_and_width(p);
    CrossDephasingInput in;
    in.f_max = e.f_max;
    in.f_min = e.f_min;
    in.sigma_f_max = in.sigma_f_min = 1e-4;
    const auto r = infer_cross_dephasing(in);
    EXPECT_FALSE(r.is_lower_bound);
    EXPECT_NEAR(r.tau_hv, 3000.0, 1e-6);
    EXPECT_NEAR(r.k, 0.9, 1e-12);
    EXPECT_GT(r.sigma_tau_hv, 0.0);

    in.assumed_k = 0.9;
    EXPECT_NEAR(infer_cross_dephasing(in).tau_hv, 3000.0, 1e-6);
}

TEST(InferCrossDephasing, DotAFitDeficitIsOnNanosecondScale) {
    // Peak 0.75 with a deficit of 0.11 ± 0.03 below the dephasing-free peak.
    CrossDephasingInput in;
    in.f_max = 0.75;
    in.sigma_f_max = 0.03;
    in.f_min = (0.75 + 0.11 + 0.5) / 3.0;
    in.tau1 = 891.0;
    const auto r = infer_cross_dephasing(in);
    EXPECT_NEAR(r.deficit, 0.11, 1e-12);
    EXPECT_NEAR(r.sigma_deficit, 0.03, 1e-12);
    EXPECT_FALSE(r.is_lower_bound);
    EXPECT_GT(r.tau_hv, 2000.0);
    EXPECT_LT(r.tau_hv, 10000.0);
}

TEST(InferCrossDephasing, InsignificantDeficitGivesLowerBound) {
    CrossDephasingInput in;
    in.f_min = 0.5;
    in.f_max = 0.99;
    in.sigma_f_max = 0.02;
    const auto r = infer_cross_dephasing(in);
    EXPECT_TRUE(r.is_lower_bound);
    // Bound from the 1σ upper deficit 0.03: g_hv = 0.94.
    EXPECT_NEAR(r.tau_hv, 891.0 / (1.0 / 0.94 - 1.0), 1e-6);
}

TEST(InferCrossDephasing, InconsistentInputs) {
    CrossDephasingInput in;
    in.f_min = 0.5;
    in.f_max = 1.2;
    in.sigma_f_max = 0.01;
    EXPECT_THROW(infer_cross_dephasing(in), DomainError);
    in.f_max = 0.8;
    in.f_min = 0.2;
    EXPECT_THROW(infer_cross_dephasing(in), DomainError);
}

TEST(LeastSquares, SingularProblemIsReported) {
    // Two parameters that enter only as a sum.
    const std::vector<double> x{0, 1, 2, 3, 4};
    const std::vector<double> y{1, 1, 1, 1, 1};
    const std::vector<double> s(5, 1.0);
    Eigen::VectorXd p0(2);
    p0 << 0.3, 0.2;
    const CurveModel m = [](double, const Eigen::VectorXd& q, Eigen::Ref<Eigen::VectorXd> g) {
        g(0) = 1.0;
        g(1) = 1.0;
        return q(0) + q(1);
    };
    EXPECT_THROW(levenberg_marquardt(x, y, s, p0, m), FitError);
}
