#pragma once

#include <string>

#include <json.hpp>

#include "analysis.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace cascade {

inline constexpr const char* kToolVersion = "0.1.0";

namespace detail {
inline nlohmann::json finite_or_string(double v) {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}
} // namespace detail

inline nlohmann::json to_json(const FitResult& r) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(r.kind));
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        j["parameters"][r.names[i]] = r.values(k);
        j["sigmas"][r.names[i]] = r.sigmas(k);
    }
    j["chi2"] = r.chi2;
    j["dof"] = r.dof;
    j["chi2_reduced"] = r.chi2_reduced;
    j["n_points"] = r.n_points;
    j["iterations"] = r.iterations;
    j["covariance_scaled_by_residuals"] = r.covariance_scaled;
    return j;
}

inline nlohmann::json to_json(const CrossDephasingInference& r) {
    return {{"is_lower_bound", r.is_lower_bound},
            {"tau_hv_ps", detail::finite_or_string(r.tau_hv)},
            {"sigma_tau_hv_ps", r.sigma_tau_hv},
            {"deficit", r.deficit},
            {"sigma_deficit", r.sigma_deficit},
            {"predicted_f_max", r.predicted_f_max},
            {"k", r.k},
            {"g_ss", r.g_ss},
            {"g_hv", r.g_hv},
            {"assumption", r.assumption}};
}

inline nlohmann::json model_summary(const ModelParams& p) {
    const auto c = coherence_fractions(p);
    const auto ext = fidelity_extrema_and_width(p);
    const auto rho = density_matrix(p);
    nlohmann::json j;
    j["params"] = {{"S_ueV", p.S},
                   {"tau1_ps", p.tau1},
                   {"tau_ss_ps", detail::finite_or_string(p.tau_ss)},
                   {"tau_hv_ps", detail::finite_or_string(p.tau_hv)},
                   {"k", p.k}};
    j["g_ss"] = c.g_ss;
    j["g_hv"] = c.g_hv;
    j["x"] = c.x;
    j["z"] = {c.z.real(), c.z.imag()};
    j["fidelity"] = fidelity_analytic(p);
    j["f_max"] = ext.f_max;
    j["f_min"] = ext.f_min;
    j["fwhm_ueV"] = ext.fwhm;
    j["phase_of_z_rad"] = phase_of_z(p);
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        nlohmann::json rr = nlohmann::json::array(), ii = nlohmann::json::array();
        for (int c2 = 0; c2 < 4; ++c2) {
            rr.push_back(rho(r, c2).real());
            ii.push_back(rho(r, c2).imag());
        }
        re.push_back(rr);
        im.push_back(ii);
    }
    j["density_matrix"] = {{"basis", {"HH", "HV", "VH", "VV"}}, {"real", re}, {"imag", im}};
    return j;
}

} // namespace cascade
