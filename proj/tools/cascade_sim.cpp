// Command-line front end: analytic model, scenario simulation, fitting and
// figure-table emission.
//
// Exit codes: 0 success, 1 usage, 2 data/schema/IO, 3 numerical failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "cascade/analysis.hpp"
#include "cascade/experiments.hpp"
#include "cascade/model.hpp"
#include "cascade/report.hpp"
#include "cascade/table_io.hpp"

namespace fs = std::filesystem;
using namespace cascade;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

double parse_time_flag(const std::string& flag, const std::string& text) {
    if (text == "inf" || text == "infinity") return kInfinity;
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw UsageError(flag + ": cannot parse '" + text + "' as a time in ps (or 'inf')");
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << bytes) || !out.flush()) throw DataError("cannot write '" + p.string() + "'");
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------- model

struct ModelOptions {
    double s = 0.0;
    double tau1 = 891.0;
    std::string tau_ss = "inf";
    std::string tau_hv = "inf";
    double k = 1.0;
    bool json = false;
};

ModelParams resolve_model_params(const ModelOptions& o) {
    ModelParams p;
    p.S = o.s;
    p.tau1 = o.tau1;
    p.tau_ss = parse_time_flag("--tau-ss", o.tau_ss);
    p.tau_hv = parse_time_flag("--tau-hv", o.tau_hv);
    p.k = o.k;
    if (!std::isfinite(p.S)) throw UsageError("--s: splitting must be finite");
    if (!(p.tau1 > 0.0) || !std::isfinite(p.tau1)) throw UsageError("--tau1: must be positive and finite");
    if (!(p.tau_ss > 0.0)) throw UsageError("--tau-ss: must be positive or 'inf'");
    if (!(p.tau_hv > 0.0)) throw UsageError("--tau-hv: must be positive or 'inf'");
    if (!(p.k >= 0.0 && p.k <= 1.0)) throw UsageError("--k: must lie in [0, 1]");
    return p;
}

int cmd_model(const ModelOptions& o) {
    const ModelParams p = resolve_model_params(o);
    const auto summary = model_summary(p);
    if (o.json) {
        std::cout << summary.dump(2) << '\n';
        return kOk;
    }
    const auto c = coherence_fractions(p);
    const auto ext = fidelity_extrema_and_width(p);
    const auto rho = density_matrix(p);
    fmt::print("S = {} ueV, tau1 = {} ps, tau_SS = {} ps, tau_HV = {} ps, k = {}\n", p.S, p.tau1,
               format_number(p.tau_ss), format_number(p.tau_hv), p.k);
    fmt::print("g_SS = {:.6f}\ng_HV = {:.6f}\nx    = {:.6f}\nz    = {:.6f} {:+.6f}i\n", c.g_ss, c.g_hv, c.x,
               c.z.real(), c.z.imag());
    fmt::print("density matrix [HH, HV, VH, VV]:\n");
    for (int r = 0; r < 4; ++r) {
        for (int col = 0; col < 4; ++col)
            fmt::print("  {:+.6f}{:+.6f}i", rho(r, col).real(), rho(r, col).imag());
        fmt::print("\n");
    }
    fmt::print("f     = {:.6f}\nf_max = {:.6f}\nf_min = {:.6f}\nfwhm  = {:.6f} ueV\nphase = {:.6f} rad\n",
               fidelity_analytic(p), ext.f_max, ext.f_min, ext.fwhm, phase_of_z(p));
    return kOk;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
    std::string scenario_file;
    std::string builtin;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> pairs;
    unsigned shards = 0;
    unsigned threads = 0;
    std::string out;
};

int cmd_simulate(const SimulateOptions& o) {
    if (o.scenario_file.empty() == o.builtin.empty())
        throw UsageError("give exactly one of --scenario FILE or --builtin NAME");

    Scenario sc;
    nlohmann::json inputs = nlohmann::json::array();
    if (!o.scenario_file.empty()) {
        const std::string text = read_file(o.scenario_file);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(o.scenario_file + ": " + e.what());
        }
        sc = scenario_from_json(doc);
        inputs.push_back({{"path", o.scenario_file}, {"fnv1a64", hash_hex(text)}});
    } else {
        sc = builtin_scenario(o.builtin);
    }

    // Precedence: flags > environment > scenario file > built-in defaults.
    MonteCarloSettings mc = sc.mc.value_or(MonteCarloSettings{});
    std::string seed_source = sc.mc ? "scenario" : "default";
    if (const char* env = std::getenv("CASCADE_SIM_SEED")) {
        try {
            mc.seed = std::stoull(env);
            seed_source = "environment";
        } catch (const std::exception&) {
            throw UsageError(std::string("CASCADE_SIM_SEED: not an unsigned integer: '") + env + "'");
        }
    }
    if (o.seed) {
        mc.seed = *o.seed;
        seed_source = "flag";
    }
    if (o.pairs) mc.n_pairs = *o.pairs;
    if (o.shards) mc.shards = o.shards;
    if (o.threads) mc.threads = o.threads;
    if (sc.mc || o.pairs) sc.mc = mc;

    const fs::path dir(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw DataError("output directory '" + o.out + "' is not usable");

    const auto records = run_scenario(sc);
    const std::string csv = to_csv(records_to_table(records));
    const fs::path data_path = dir / (sc.name + ".csv");
    write_file(data_path, csv);

    nlohmann::json failures = nlohmann::json::array();
    std::size_t inconsistent = 0;
    for (const auto& r : records) {
        if (!r.error.empty()) failures.push_back(r.error);
        if (!r.consistent) ++inconsistent;
    }
    nlohmann::json manifest;
    manifest["tool_version"] = kToolVersion;
    manifest["scenario"] = sc.name;
    manifest["resolved"] = scenario_to_json(sc);
    manifest["seed"] = sc.mc ? nlohmann::json(sc.mc->seed) : nlohmann::json(nullptr);
    manifest["seed_source"] = seed_source;
    manifest["generator"] = kGeneratorName;
    manifest["created_utc"] = utc_now();
    manifest["inputs"] = inputs;
    manifest["outputs"] = {{{"path", data_path.filename().string()}, {"fnv1a64", hash_hex(csv)}}};
    manifest["point_failures"] = failures;
    manifest["points_outside_5_sigma"] = inconsistent;
    write_file(dir / (sc.name + ".manifest.json"), manifest.dump(2) + "\n");

    fmt::print("{}: {} points -> {}\n", sc.name, records.size(), data_path.string());
    if (!failures.empty()) fmt::print(stderr, "{} point(s) failed; see manifest\n", failures.size());
    return kOk;
}

// ---------------------------------------------------------------- fit

struct FitOptions {
    std::string kind;
    std::string input;
    std::string column;
    std::string sigma_column;
    double sigma_s = 0.0;
    std::string out;
};

std::vector<double> finite_rows_mask(const std::vector<double>& v) {
    std::vector<double> keep;
    for (double x : v) keep.push_back(std::isfinite(x) ? 1.0 : 0.0);
    return keep;
}

int cmd_fit(const FitOptions& o) {
    const std::string text = read_file(o.input);
    std::istringstream in(text);
    const Table t = read_csv(in);

    FitResult result;
    nlohmann::json assumptions;
    if (o.kind == "lorentzian") {
        std::string fcol = o.column;
        if (fcol.empty())
            for (const char* c : {"f", "f_mc", "f_analytic"})
                if (t.has_column(c)) {
                    fcol = c;
                    break;
                }
        if (fcol.empty()) throw DataError("missing fidelity column (f, f_mc or f_analytic)");
        std::string scol = o.sigma_column;
        if (scol.empty() && fcol != "f_analytic")
            for (const char* c : {"f_sigma", "f_mc_sigma"})
                if (t.has_column(c)) {
                    scol = c;
                    break;
                }
        const auto S = t.column("S_ueV");
        const auto f = t.column(fcol);
        const auto keep = finite_rows_mask(f);
        const std::vector<double> sf = scol.empty() ? std::vector<double>(f.size(), 0.0) : t.column(scol);
        const std::vector<double> ss =
            t.has_column("S_sigma_ueV") ? t.column("S_sigma_ueV") : std::vector<double>(f.size(), o.sigma_s);
        std::vector<FidelityPoint> pts;
        for (std::size_t i = 0; i < f.size(); ++i)
            if (keep[i] > 0.0) pts.push_back({S[i], ss[i], f[i], std::isfinite(sf[i]) ? sf[i] : 0.0});
        result = fit_lorentzian(pts);
        assumptions = {{"fidelity_column", fcol},
                       {"sigma_column", scol.empty() ? nlohmann::json(nullptr) : nlohmann::json(scol)},
                       {"sigma_S_ueV", t.has_column("S_sigma_ueV") ? nlohmann::json("per-row") : nlohmann::json(o.sigma_s)}};
    } else if (o.kind == "exponential") {
        result = fit_exponential(t.column("t_ps"), t.column("counts"));
        assumptions = {{"weights", "poisson sqrt(count), empty bins excluded"}};
    } else if (o.kind == "visibility") {
        const auto d = t.column("delay_ps");
        const auto v = t.column("visibility");
        std::vector<VisibilityPoint> pts;
        for (std::size_t i = 0; i < d.size(); ++i) pts.push_back({d[i], v[i]});
        result = fit_visibility(pts);
        assumptions = {{"weights", "uniform; covariance scaled by residual variance"}};
    } else {
        throw UsageError("--kind must be lorentzian, exponential or visibility");
    }

    nlohmann::json j = to_json(result);
    j["provenance"] = {{"tool_version", kToolVersion},
                       {"input", o.input},
                       {"input_fnv1a64", hash_hex(text)},
                       {"assumptions", assumptions}};
    const std::string body = j.dump(2) + "\n";
    if (o.out.empty())
        std::cout << body;
    else
        write_file(o.out, body);
    return kOk;
}

// ---------------------------------------------------------------- figure

struct FigureCliOptions {
    std::vector<std::string> ids;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::uint64_t pairs = 100000;
    unsigned threads = 0;
};

int cmd_figure(const FigureCliOptions& o) {
    std::vector<std::string> ids = o.ids;
    if (ids.size() == 1 && ids[0] == "all") ids = figure_ids();
    FigureOptions fo;
    if (const char* env = std::getenv("CASCADE_SIM_SEED")) fo.seed = std::strtoull(env, nullptr, 10);
    if (o.seed) fo.seed = *o.seed;
    fo.n_pairs = o.pairs;
    fo.threads = o.threads;
    // Validate every id before doing any work.
    for (const auto& id : ids)
        if (std::find(figure_ids().begin(), figure_ids().end(), id) == figure_ids().end()) figure_table(id, fo);

    const fs::path dir(o.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw DataError("output directory '" + o.out + "' is not usable");
    for (const auto& id : ids) {
        const fs::path path = dir / (id + ".csv");
        write_file(path, to_csv(figure_table(id, fo)));
        fmt::print("{} -> {}\n", id, path.string());
    }
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Biexciton-cascade entanglement model, simulator and fitting pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    ModelOptions mo;
    auto* model = app.add_subcommand("model", "Print density matrix, fidelity, extrema, width and phase");
    model->add_option("--s", mo.s, "Fine-structure splitting, ueV");
    model->add_option("--tau1", mo.tau1, "Exciton radiative lifetime, ps");
    model->add_option("--tau-ss", mo.tau_ss, "Spin-scattering time, ps or 'inf'");
    model->add_option("--tau-hv", mo.tau_hv, "Cross-dephasing time, ps or 'inf'");
    model->add_option("--k", mo.k, "Fraction of pairs originating from the dot");
    model->add_flag("--json", mo.json, "Emit JSON");

    SimulateOptions so;
    auto* simulate = app.add_subcommand("simulate", "Run a splitting sweep, analytic and Monte Carlo");
    simulate->add_option("--scenario", so.scenario_file, "Scenario JSON file");
    simulate->add_option("--builtin", so.builtin, "Built-in scenario name");
    simulate->add_option("--seed", so.seed, "RNG seed (default: $CASCADE_SIM_SEED, then scenario)");
    simulate->add_option("--pairs", so.pairs, "Pairs per point and basis");
    simulate->add_option("--shards", so.shards, "Independent work partitions");
    simulate->add_option("--threads", so.threads, "Worker threads");
    simulate->add_option("--out", so.out, "Output directory")->required();

    FitOptions fo;
    auto* fit = app.add_subcommand("fit", "Fit a Lorentzian, exponential or visibility-decay model");
    fit->add_option("--kind", fo.kind, "lorentzian | exponential | visibility")->required();
    fit->add_option("input", fo.input, "Input CSV")->required();
    fit->add_option("--column", fo.column, "Fidelity column (lorentzian)");
    fit->add_option("--sigma-column", fo.sigma_column, "Fidelity uncertainty column (lorentzian)");
    fit->add_option("--sigma-s", fo.sigma_s, "Splitting uncertainty applied to every row, ueV");
    fit->add_option("--out", fo.out, "Write JSON here instead of stdout");

    FigureCliOptions go;
    auto* figure = app.add_subcommand("figure", "Emit plot-ready CSV tables per figure panel");
    figure->add_option("ids", go.ids, "Figure ids, or 'all'")->required();
    figure->add_option("--out", go.out, "Output directory")->required();
    figure->add_option("--seed", go.seed, "RNG seed");
    figure->add_option("--pairs", go.pairs, "Pairs per point and basis for simulated panels");
    figure->add_option("--threads", go.threads, "Worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*model) return cmd_model(mo);
        if (*simulate) return cmd_simulate(so);
        if (*fit) return cmd_fit(fo);
        if (*figure) return cmd_figure(go);
    } catch (const UsageError& e) {
        fmt::print(stderr, "usage error: {}\n", e.what());
        return kUsage;
    } catch (const DataError& e) {
        fmt::print(stderr, "data error: {}\n", e.what());
        return kData;
    } catch (const FitError& e) {
        fmt::print(stderr, "fit failed after {} iterations: {}\n", e.iterations(), e.what());
        return kNumerical;
    } catch (const DomainError& e) {
        fmt::print(stderr, "numerical/domain error: {}\n", e.what());
        return kNumerical;
    } catch (const StatisticError& e) {
        fmt::print(stderr, "numerical error: {}\n", e.what());
        return kNumerical;
    }
    return kUsage;
}
