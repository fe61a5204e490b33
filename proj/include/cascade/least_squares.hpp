#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace cascade {

/// Model callback: returns the model value at `x` and writes ∂value/∂params
/// into `grad`.
using CurveModel =
    std::function<double(double x, const Eigen::VectorXd& params, Eigen::Ref<Eigen::VectorXd> grad)>;

struct LeastSquaresOptions {
    int max_iterations = 200;
    double relative_step_tolerance = 1e-10;
    double initial_lambda = 1e-3;
    /// Parameter vectors rejected by this predicate are treated as failed steps.
    std::function<bool(const Eigen::VectorXd&)> admissible;
};

struct LeastSquaresSolution {
    Eigen::VectorXd params;
    Eigen::MatrixXd covariance; // (JᵀWJ)⁻¹, unscaled
    double chi2 = 0.0;
    int iterations = 0;
};

namespace detail {

inline double weighted_chi2(std::span<const double> x, std::span<const double> y,
                            std::span<const double> sigma, const CurveModel& model,
                            const Eigen::VectorXd& p) {
    Eigen::VectorXd g(p.size());
    double chi2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = (y[i] - model(x[i], p, g)) / sigma[i];
        chi2 += r * r;
    }
    return chi2;
}

} // namespace detail

/// Weighted nonlinear least squares by damped Gauss-Newton (Levenberg-
/// Marquardt with Marquardt diagonal scaling). Converges when an accepted
/// step is smaller than the tolerance relative to the parameter vector, or
/// when no damping level can lower χ² any further.
inline LeastSquaresSolution levenberg_marquardt(std::span<const double> x, std::span<const double> y,
                                                std::span<const double> sigma, Eigen::VectorXd params,
                                                const CurveModel& model,
                                                const LeastSquaresOptions& opt = {}) {
    const auto n_par = params.size();
    const std::size_t n = x.size();
    if (y.size() != n || sigma.size() != n) throw UsageError("x, y and sigma lengths differ");
    if (n < static_cast<std::size_t>(n_par)) throw UsageError("fewer data points than parameters");

    auto admissible = [&](const Eigen::VectorXd& p) {
        if (!p.allFinite()) return false;
        return !opt.admissible || opt.admissible(p);
    };
    if (!admissible(params)) throw FitError("initial guess is not admissible", 0);

    Eigen::MatrixXd jtj(n_par, n_par);
    Eigen::VectorXd jtr(n_par);
    Eigen::VectorXd grad(n_par);

    auto build_normal_equations = [&](const Eigen::VectorXd& p) {
        jtj.setZero();
        jtr.setZero();
        double chi2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = 1.0 / sigma[i];
            const double r = (y[i] - model(x[i], p, grad)) * w;
            grad *= w;
            jtj.selfadjointView<Eigen::Lower>().rankUpdate(grad);
            jtr += grad * r;
            chi2 += r * r;
        }
        jtj = jtj.selfadjointView<Eigen::Lower>();
        return chi2;
    };

    double chi2 = build_normal_equations(params);
    double lambda = opt.initial_lambda;
    int iter = 0;
    bool converged = false;

    for (; iter < opt.max_iterations && !converged; ++iter) {
        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::MatrixXd damped = jtj;
            for (Eigen::Index k = 0; k < n_par; ++k)
                damped(k, k) += lambda * std::max(jtj(k, k), 1e-300);
            const Eigen::VectorXd step = damped.ldlt().solve(jtr);
            const Eigen::VectorXd trial = params + step;
            if (!admissible(trial)) {
                lambda *= 10.0;
                continue;
            }
            const double trial_chi2 = detail::weighted_chi2(x, y, sigma, model, trial);
            if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
                // Step size relative to the parameter vector, both measured in
                // the curvature metric D = √diag(JᵀWJ) (MINPACK's xtol test).
                const Eigen::VectorXd d = jtj.diagonal().cwiseMax(0.0).cwiseSqrt();
                const double norm_p = d.cwiseProduct(trial).norm();
                const double rel = norm_p > 0.0 ? d.cwiseProduct(step).norm() / norm_p : 0.0;
                params = trial;
                chi2 = build_normal_equations(params);
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                converged = rel < opt.relative_step_tolerance || trial_chi2 == 0.0;
                break;
            }
            lambda *= 10.0;
        }
        // No damping level improves χ²: already at the minimum to working precision.
        if (!accepted) converged = true;
    }
    if (!converged) throw FitError("no convergence after " + std::to_string(iter) + " iterations", iter);

    // Rank test on the diagonally normalised normal matrix so that parameters
    // of very different magnitude do not mask a real degeneracy.
    const Eigen::VectorXd diag = jtj.diagonal();
    if ((diag.array() <= 0.0).any())
        throw FitError("normal matrix is singular: parameters are not identifiable from the data", iter);
    const Eigen::VectorXd inv_sqrt = diag.cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd normalised = inv_sqrt.asDiagonal() * jtj * inv_sqrt.asDiagonal();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(normalised);
    lu.setThreshold(1e-10);
    if (!lu.isInvertible())
        throw FitError("normal matrix is singular: parameters are not identifiable from the data", iter);
    const Eigen::MatrixXd covariance = inv_sqrt.asDiagonal() * lu.inverse() * inv_sqrt.asDiagonal();
    return {params, covariance, chi2, iter};
}

} // namespace cascade
