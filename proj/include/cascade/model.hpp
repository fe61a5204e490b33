#pragma once

#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Dense>

#include "constants.hpp"
#include "errors.hpp"

namespace cascade {

using Complex = std::complex<double>;
using Matrix4c = Eigen::Matrix<Complex, 4, 4>;
using Vector4c = Eigen::Matrix<Complex, 4, 1>;
using Matrix2c = Eigen::Matrix<Complex, 2, 2>;

/// Physical parameters of the cascade. Times in ps, splitting in μeV.
/// An infinite tau_ss or tau_hv means the process is absent.
struct ModelParams {
    double S = 0.0;
    double tau1 = 891.0;
    double tau_ss = kInfinity;
    double tau_hv = kInfinity;
    double k = 1.0;

    /// Throws DomainError naming the offending field.
    void validate() const {
        if (!std::isfinite(S)) throw DomainError("S must be finite");
        if (!(tau1 > 0.0) || !std::isfinite(tau1))
            throw DomainError("tau1 must be positive and finite");
        if (!(tau_ss > 0.0)) throw DomainError("tau_ss must be positive");
        if (!(tau_hv > 0.0)) throw DomainError("tau_hv must be positive");
        if (!(k >= 0.0 && k <= 1.0)) throw DomainError("k must lie in [0, 1]");
    }

    ModelParams with_splitting(double s) const {
        ModelParams p = *this;
        p.S = s;
        return p;
    }
};

struct CoherenceFractions {
    double g_ss = 1.0; // spin-preserved fraction
    double g_hv = 1.0; // first-order cross-coherence
    double x = 0.0;    // g_hv * S * tau1 / hbar
    Complex z{1.0, 0.0};
};

/// 1/tau with tau = inf mapping to 0.
inline double rate_of(double tau) { return std::isinf(tau) ? 0.0 : 1.0 / tau; }

inline CoherenceFractions coherence_fractions(const ModelParams& p) {
    p.validate();
    const double r_ss = p.tau1 * rate_of(p.tau_ss);
    const double r_hv = p.tau1 * rate_of(p.tau_hv);
    CoherenceFractions c;
    c.g_ss = 1.0 / (1.0 + r_ss);
    c.g_hv = 1.0 / (1.0 + r_ss + r_hv);
    c.x = c.g_hv * p.S * p.tau1 / kHbar;
    c.z = Complex(1.0, c.x) / (1.0 + c.x * c.x);
    return c;
}

/// Two-photon state in the [H_XX H_X, H_XX V_X, V_XX H_X, V_XX V_X] basis.
/// Index = 2 * (XX polarisation) + (X polarisation), H = 0, V = 1.
struct TwoPhotonDensityMatrix {
    Matrix4c elements = Matrix4c::Zero();

    Complex operator()(int r, int c) const { return elements(r, c); }
    Complex& operator()(int r, int c) { return elements(r, c); }

    Complex trace() const { return elements.trace(); }

    bool is_hermitian(double tol = 1e-12) const {
        const double scale = std::max(1.0, elements.cwiseAbs().maxCoeff());
        return (elements - elements.adjoint()).cwiseAbs().maxCoeff() <= tol * scale;
    }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix4c> solver(elements, Eigen::EigenvaluesOnly);
        return solver.eigenvalues().minCoeff();
    }

    /// ⟨ψ|ρ|ψ⟩ for a (not necessarily normalised) state vector.
    double overlap(const Vector4c& psi) const {
        return (psi.adjoint() * elements * psi)(0, 0).real();
    }

    /// Tr[ρ·M] for a Hermitian observable M.
    double expectation(const Matrix4c& observable) const {
        return (elements * observable).trace().real();
    }

    /// Reduced state of the biexciton photon.
    Matrix2c reduced_xx() const {
        Matrix2c r;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                r(a, b) = elements(2 * a, 2 * b) + elements(2 * a + 1, 2 * b + 1);
        return r;
    }

    /// Reduced state of the exciton photon.
    Matrix2c reduced_x() const {
        Matrix2c r;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                r(a, b) = elements(a, b) + elements(2 + a, 2 + b);
        return r;
    }

    double max_abs_difference(const TwoPhotonDensityMatrix& other) const {
        return (elements - other.elements).cwiseAbs().maxCoeff();
    }
};

/// (|HH⟩ + |VV⟩)/√2.
inline Vector4c phi_plus() {
    Vector4c v = Vector4c::Zero();
    v(0) = v(3) = 1.0 / std::sqrt(2.0);
    return v;
}

/// (|HH⟩ + exp(i·phase)|VV⟩)/√2.
inline Vector4c cascade_state(double phase) {
    Vector4c v = Vector4c::Zero();
    v(0) = 1.0 / std::sqrt(2.0);
    v(3) = std::polar(1.0 / std::sqrt(2.0), phase);
    return v;
}

/// Two-photon state after the exciton has spent time t (ps) in the split
/// superposition. S in μeV.
inline Vector4c pure_state_at_time(double S, double t) {
    if (!(t >= 0.0)) throw DomainError("emission time must be non-negative");
    return cascade_state(S * t / kHbar);
}

inline TwoPhotonDensityMatrix density_matrix(const ModelParams& p) {
    const CoherenceFractions c = coherence_fractions(p);
    TwoPhotonDensityMatrix rho;
    const double diag_corr = (1.0 + p.k * c.g_ss) / 4.0;
    const double diag_anti = (1.0 - p.k * c.g_ss) / 4.0;
    rho(0, 0) = rho(3, 3) = diag_corr;
    rho(1, 1) = rho(2, 2) = diag_anti;
    rho(0, 3) = p.k * c.g_hv * std::conj(c.z) / 2.0;
    rho(3, 0) = p.k * c.g_hv * c.z / 2.0;
    return rho;
}

/// Fidelity with (|HH⟩ + |VV⟩)/√2, closed form.
inline double fidelity_analytic(const ModelParams& p) {
    const CoherenceFractions c = coherence_fractions(p);
    return 0.25 * (1.0 + p.k * c.g_ss + 2.0 * p.k * c.g_hv / (1.0 + c.x * c.x));
}

struct FidelityExtrema {
    double f_max = 0.0;
    double f_min = 0.0;
    double fwhm = 0.0; // μeV
};

/// Peak (S = 0), large-splitting base and FWHM of the fidelity Lorentzian.
/// The S field of `p` is ignored.
inline FidelityExtrema fidelity_extrema_and_width(const ModelParams& p) {
    const CoherenceFractions c = coherence_fractions(p.with_splitting(0.0));
    return {0.25 * (1.0 + p.k * c.g_ss + 2.0 * p.k * c.g_hv),
            0.25 * (1.0 + p.k * c.g_ss),
            2.0 * kHbar / (p.tau1 * c.g_hv)};
}

/// arg z = atan(x), in (−π/2, π/2).
inline double phase_of_z(const ModelParams& p) { return std::atan(coherence_fractions(p).x); }

/// Splitting above which a cross-dephased curve (cross-coherence g_hv, no
/// spin scattering, no background) has higher fidelity than the ideal one.
inline double dephased_exceeds_ideal_crossover(double tau1, double g_hv) {
    if (!(tau1 > 0.0)) throw DomainError("tau1 must be positive");
    if (!(g_hv > 0.0 && g_hv < 1.0)) throw DomainError("g_hv must lie in (0, 1)");
    return kHbar / (tau1 * std::sqrt(g_hv));
}

/// tau_hv giving cross-coherence g_hv at fixed tau1 and tau_ss.
inline double tau_hv_for_coherence(double tau1, double tau_ss, double g_hv) {
    const double g_ss = 1.0 / (1.0 + tau1 * rate_of(tau_ss));
    if (!(g_hv > 0.0 && g_hv <= g_ss))
        throw DomainError("g_hv must lie in (0, g_ss]");
    const double denom = 1.0 / g_hv - 1.0 / g_ss;
    return denom <= 0.0 ? kInfinity : tau1 / denom;
}

} // namespace cascade
