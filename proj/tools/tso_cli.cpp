// tso_cli.cpp: batch front end for fitting, surrogate search, simulation and spectra

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tso/io.hpp"

namespace {

using namespace tso;
using io::json;
namespace fs = std::filesystem;

constexpr int exit_config = 2, exit_infeasible = 3, exit_numeric = 4;

struct Infeasible : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Job {
    std::string command;
    json config;
    fs::path base;
    fs::path out;
    std::uint64_t seed{1};
    int threads{0};
    int verbosity{0};
    json outputs = json::array();

    void log(const std::string& msg, int level = 1) const {
        if (verbosity >= level) std::cerr << "[" << command << "] " << msg << '\n';
    }
    void emit(const std::string& name, const std::string& content) {
        io::write_file(out / name, content);
        outputs.push_back(name);
        log("wrote " + (out / name).string());
    }
    std::uint64_t stage_seed(std::uint64_t stage) const { return stream_seed(seed, stage); }
    void finish(const json& report) {
        json m = io::manifest(command, config, seed);
        m["threads"] = resolve_threads(threads);
        m["report"] = report;
        outputs.push_back("manifest.json");
        m["outputs"] = outputs;
        io::write_file(out / "manifest.json", m.dump(2) + "\n");
    }
};

const json& section(const json& cfg, const std::string& key) {
    static const json empty = json::object();
    if (!io::has(cfg, key)) return empty;
    if (!cfg.at(key).is_object()) throw ConfigError("/" + key + ": expected an object");
    return cfg.at(key);
}

ode::Options ode_options(const json& cfg, double rtol = 1e-8, double atol = 1e-10) {
    const json& s = section(cfg, "solver");
    ode::Options o;
    o.rtol = io::number_or(s, "rtol", "/solver", rtol);
    o.atol = io::number_or(s, "atol", "/solver", atol);
    if (!(o.rtol > 0.0) || !(o.atol > 0.0)) throw ConfigError("/solver: tolerances must be positive");
    return o;
}

// {"t_max": x} in model time units or {"t_max_ps": x}; "points" samples including t = 0.
std::vector<double> time_grid(const json& cfg, Unit unit) {
    const json& g = io::member(cfg, "grid", "");
    double t_max = 0.0;
    if (io::has(g, "t_max_ps")) {
        try {
            t_max = io::number(g, "t_max_ps", "/grid") * time_per_ps(unit);
        } catch (const ContractError&) {
            throw ConfigError("/grid/t_max_ps: needs a bath in cm-1 or 100cm-1");
        }
    } else {
        t_max = io::number(g, "t_max", "/grid");
    }
    const long n = io::integer_or(g, "points", "/grid", 201);
    if (!(t_max > 0.0) || n < 2) throw ConfigError("/grid: need t_max > 0 and at least two points");
    return ode::uniform_grid(t_max, static_cast<std::size_t>(n));
}

// Smallest t with |C| <= 1e-3 C(0) on both t and 1.25 t.
double decay_time(const BathSpec& spec) {
    double scale = 0.0;
    for (const auto& c : spec.components) scale = std::max(scale, frequency_scale(c));
    const double c0 = std::abs(thermal_correlation(spec, 0.0));
    double t = 1.0 / scale;
    for (int i = 0; i < 80; ++i, t *= 1.25)
        if (std::abs(thermal_correlation(spec, t)) <= 1e-3 * c0 && std::abs(thermal_correlation(spec, 1.25 * t)) <= 1e-3 * c0) return t;
    throw NumericError("correlation function does not decay to 1e-3 of C(0); set fit/t_max");
}

json fit_report(const ExponentialFit& f, const CorrelationSeries& s) {
    return {{"n_terms", f.n_terms()},
            {"residual", f.residual},
            {"relative_residual", f.residual / series_norm(s)},
            {"weight_sum_error", std::abs(f.weight_sum() - s.values.front())},
            {"t_max", s.t_max()},
            {"samples", s.size()},
            {"stagnated", f.stagnated},
            {"diagnostic", f.diagnostic}};
}

CorrelationSeries fit_series(const BathSpec& spec, const json& fit, std::size_t n_terms) {
    const double t_max = io::has(fit, "t_max") ? io::number(fit, "t_max", "/fit") : decay_time(spec);
    const long n = io::integer_or(fit, "samples", "/fit", static_cast<long>(std::max<std::size_t>(128, 16 * n_terms)));
    if (!(t_max > 0.0) || n < static_cast<long>(2 * n_terms + 1)) throw ConfigError("/fit: need t_max > 0 and samples > 2N");
    return sample_correlation(spec, t_max, static_cast<std::size_t>(n));
}

std::vector<long> term_counts(const json& fit) {
    if (io::has(fit, "n_sweep")) {
        std::vector<long> ns;
        for (int v : io::int_list(fit.at("n_sweep"), "/fit/n_sweep")) ns.push_back(v);
        return ns;
    }
    return {io::integer(io::member(fit, "n", "/fit"), "/fit/n")};
}

// ---------------------------------------------------------------------------

void cmd_fit(Job& job) {
    const BathSpec spec = io::bath_spec_from_config(io::member(job.config, "bath", ""), "/bath");
    const json& fit = section(job.config, "fit");
    const auto ns = term_counts(fit);
    json report = json::array();
    for (long n : ns) {
        if (n < 1 || n > 8) throw ConfigError("/fit: term counts must lie in 1..8");
        const auto series = fit_series(spec, fit, static_cast<std::size_t>(n));
        const auto f = fit_correlation(series, static_cast<std::size_t>(n));
        const std::string name = ns.size() == 1 ? "fit.csv" : "fit_N" + std::to_string(n) + ".csv";
        job.emit(name, "# unit: " + unit_name(spec.unit) + "\n" + io::fit_to_csv(f));
        json r = fit_report(f, series);
        r["file"] = name;
        report.push_back(r);
        job.log("N = " + std::to_string(n) + " relative residual " + io::format_double(r["relative_residual"].get<double>()));
    }
    job.emit("fit_report.json", report.dump(2) + "\n");
    job.finish({{"fits", report}});
}

void cmd_tso(Job& job) {
    const json& target_cfg = io::member(job.config, "target", "");
    const json& tc = section(job.config, "tso");
    std::optional<BathSpec> spec;
    TsoTarget target;
    Unit unit = Unit::omega_c;
    if (io::has(target_cfg, "fit_file")) {
        fs::path f = io::text(target_cfg, "fit_file", "/target");
        if (f.is_relative()) f = job.base / f;
        const std::string text = io::read_file(f);
        target.fit = io::fit_from_csv(text, f.string());
        if (const auto* u = io::parse_csv(text, f.string()).find_meta("unit")) unit = parse_unit(*u);
    }
    if (io::has(target_cfg, "bath")) {
        spec = io::bath_spec_from_config(target_cfg.at("bath"), "/target/bath");
        unit = spec->unit;
    }
    if (!spec && target.fit.n_terms() == 0) throw ConfigError("/target: give fit_file or bath");
    if (target.fit.n_terms() == 0) {
        const long n = io::integer(io::member(target_cfg, "n_modes", "/target"), "/target/n_modes");
        if (n < 1 || n > 8) throw ConfigError("/target/n_modes: must lie in 1..8");
        const json& fit = section(job.config, "fit");
        const auto series = fit_series(*spec, fit, static_cast<std::size_t>(n));
        target.fit = fit_correlation(series, static_cast<std::size_t>(n));
        job.emit("fit.csv", "# unit: " + unit_name(unit) + "\n" + io::fit_to_csv(target.fit));
    }
    const std::size_t N = target.fit.n_terms();

    // merit grid: sampled from the exact target when known, else from the fit
    double t_max = io::number_or(tc, "t_max", "/tso", 0.0);
    if (!(t_max > 0.0) && spec) t_max = 25.0 / frequency_scale(spec->components.front());
    if (!(t_max > 0.0)) {
        double slowest = std::numeric_limits<double>::infinity();
        for (const auto& r : target.fit.rates) slowest = std::min(slowest, std::abs(r.real()));
        t_max = 10.0 / slowest;
    }
    const long n_max = io::integer_or(tc, "points", "/tso", 512);
    if (spec) {
        target.grid = merit_grid(*spec, t_max, static_cast<std::size_t>(n_max));
        target.exact = [s = *spec](double t) { return thermal_correlation(s, t); };
    } else {
        target.grid.dt = t_max / static_cast<double>(n_max);
        for (long k = 0; k <= n_max; ++k) target.grid.values.push_back(target.fit(target.grid.time(static_cast<std::size_t>(k))));
    }
    target.t_max = t_max;

    const std::string method = io::text_or(tc, "method", "/tso", "search");
    json report = {{"method", method}, {"n_modes", N}, {"unit", unit_name(unit)}, {"t_max", t_max}};
    std::vector<RankedBath> baths;
    if (method == "exact") {
        ExactSolution s;
        if (N == 1) s = exact_one_mode(target.fit);
        else if (N == 2) s = exact_two_mode(target.fit);
        else if (N == 3) s = exact_three_mode(target.fit);
        else throw ConfigError("/tso/method: exact inversion needs 1 to 3 modes");
        if (s.bath) {
            s.bath->unit = unit;
            RankedBath r;
            r.bath = *s.bath;
            r.merit = merit_i2(r.bath, target.grid);
            baths.push_back(r);
        }
        report["reason"] = s.reason;
    } else if (method == "search") {
        TsoConfig cfg;
        cfg.g_max = io::number_or(tc, "g_max", "/tso", 0.0);
        cfg.samples = static_cast<int>(io::integer_or(tc, "samples", "/tso", cfg.samples));
        cfg.newton_starts = static_cast<int>(io::integer_or(tc, "starts", "/tso", cfg.newton_starts));
        cfg.keep = static_cast<int>(io::integer_or(tc, "keep", "/tso", 3));
        cfg.refine = static_cast<int>(io::integer_or(tc, "refine", "/tso", cfg.refine));
        cfg.project_unphysical = io::flag_or(tc, "project_unphysical", "/tso", true);
        cfg.seed = job.stage_seed(1);
        cfg.threads = job.threads;
        const std::string merit = io::text_or(tc, "merit", "/tso", "I2");
        if (merit == "I1") cfg.merit = Merit::I1;
        else if (merit == "I2") cfg.merit = Merit::I2;
        else throw ConfigError("/tso/merit: expected I1 or I2");
        if (cfg.merit == Merit::I1 && !spec) throw ConfigError("/tso/merit: I1 needs target/bath");
        job.log("ranking by " + merit + ", " + std::to_string(cfg.samples) + " coupling samples");
        const auto r = run_tso(target, N, cfg, unit);
        baths = r.baths;
        const auto& d = r.diagnostics;
        report["merit"] = merit;
        report["g_max"] = r.g_max;
        report["seed"] = cfg.seed;
        report["diagnostics"] = {{"samples", d.samples},
                                 {"with_solution", d.with_solution},
                                 {"with_physical", d.with_physical},
                                 {"fraction_physical", d.samples ? double(d.with_physical) / double(d.samples) : 0.0},
                                 {"search_merit", d.search_merit},
                                 {"best_merit", d.best_merit},
                                 {"refined", d.refined},
                                 {"projected", d.projected}};
    } else {
        throw ConfigError("/tso/method: expected search or exact");
    }
    json ranked = json::array();
    for (std::size_t k = 0; k < baths.size(); ++k) {
        const std::string name = "bath_" + std::to_string(k + 1) + ".csv";
        job.emit(name, io::bath_to_csv(baths[k].bath));
        ranked.push_back({{"file", name}, {"merit", baths[k].merit}, {"bath", io::bath_to_json(baths[k].bath)}});
    }
    report["baths"] = ranked;
    job.emit("tso_report.json", report.dump(2) + "\n");
    job.finish(report);
    if (baths.empty()) throw Infeasible("no physical surrogate bath found; see tso_report.json");
}

LindbladModel bath_only(const SurrogateBath& b) {
    SystemSpec s;
    s.unit = b.unit;
    s.H = Eigen::MatrixXcd::Zero(1, 1);
    s.couplings = {Eigen::MatrixXcd::Zero(1, 1)};
    return assemble_model(s, {{b, 0, "bath"}});
}

void cmd_correlation(Job& job) {
    const SurrogateBath bath = io::surrogate_from_config(io::member(job.config, "bath", ""), "/bath", job.base);
    const auto grid = time_grid(job.config, bath.unit);
    std::vector<std::string> head = {"t", "C_re", "C_im"};
    std::vector<std::vector<double>> cols(3);
    for (double t : grid) {
        const cplx c = correlation_from_params(bath, t);
        cols[0].push_back(t);
        cols[1].push_back(c.real());
        cols[2].push_back(c.imag());
    }
    json report = {{"modes", bath.n_modes()}, {"unit", unit_name(bath.unit)}};
    if (io::has(job.config, "exact")) {
        const BathSpec spec = io::bath_spec_from_config(job.config.at("exact"), "/exact");
        head.insert(head.end(), {"exact_re", "exact_im"});
        cols.resize(5);
        double dev = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const cplx e = thermal_correlation(spec, grid[k]);
            cols[3].push_back(e.real());
            cols[4].push_back(e.imag());
            dev = std::max(dev, std::abs(e - cplx{cols[1][k], cols[2][k]}));
        }
        report["max_deviation_from_exact"] = dev;
    }
    if (io::flag_or(job.config, "regression", "", false)) {
        if (bath.dims.empty()) throw ConfigError("/bath/dims: the regression check needs truncation dims");
        const auto m = bath_only(bath);
        const SparseOp F = bath_coupling_operator(m, bath, 1);
        const auto r = two_time_correlation(m, F, product_density(m, Eigen::MatrixXcd::Identity(1, 1)), grid, ode_options(job.config));
        head.insert(head.end(), {"regression_re", "regression_im"});
        const std::size_t base = cols.size();
        cols.resize(base + 2);
        double dev = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            cols[base].push_back(r.values[k].real());
            cols[base + 1].push_back(r.values[k].imag());
            dev = std::max(dev, std::abs(r.values[k] - cplx{cols[1][k], cols[2][k]}));
        }
        report["max_regression_deviation"] = dev;
        report["dim"] = m.dim();
    }
    job.emit("correlation.csv", io::columns_csv(head, cols));
    job.finish(report);
}

// ---------------------------------------------------------------------------
// simulate

struct Prepared {
    LindbladModel model;
    Eigen::VectorXcd psi; // system state
};

Eigen::MatrixXcd projector(Eigen::Index n, Eigen::Index row, Eigen::Index col) {
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, n);
    p(row, col) = 1.0;
    return p;
}

void add_system_observable(LindbladModel& m, const std::string& name, const Eigen::MatrixXcd& op) {
    m.observables.push_back({name, detail::kron(detail::to_sparse(op), detail::identity(m.environment_dim()))});
}

Eigen::VectorXcd basis(Eigen::Index n, Eigen::Index k) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
    v[k] = 1.0;
    return v;
}

Eigen::VectorXcd site_state(const json& model, Eigen::Index n) {
    const long site = io::integer_or(model, "initial_site", "/model", 1);
    if (site < 1 || site > n) throw ConfigError("/model/initial_site: out of range");
    return basis(n, site - 1);
}

Eigen::VectorXcd qubit_state(const json& model) {
    const std::string s = io::text_or(model, "initial", "/model", "plus");
    if (s == "plus") return Eigen::Vector2cd(1.0, 1.0) / std::sqrt(2.0);
    if (s == "up") return basis(2, 0);
    if (s == "down") return basis(2, 1);
    throw ConfigError("/model/initial: expected plus, up or down");
}

DimerSpec dimer_spec(const json& model, const std::string& path) {
    DimerSpec d;
    d.E1 = io::number_or(model, "E1", path, d.E1);
    d.E2 = io::number_or(model, "E2", path, d.E2);
    d.J = io::number_or(model, "J", path, d.J);
    return d;
}

Prepared prepare_model(const Job& job) {
    const json& model = io::member(job.config, "model", "");
    const std::string type = io::text(model, "type", "/model");
    Prepared p;
    if (type == "qubit") {
        SystemSpec s;
        s.H = 0.5 * io::number_or(model, "omega0", "/model", 4.0) * pauli_z();
        p.model = assemble_model(s, {});
        add_system_observable(p.model, "sigma_z", pauli_z());
        add_system_observable(p.model, "rho01", projector(2, 1, 0));
        p.psi = qubit_state(model);
        return p;
    }
    const SurrogateBath bath = io::surrogate_from_config(io::member(job.config, "bath", ""), "/bath", job.base);
    if (bath.dims.empty()) throw ConfigError("/bath/dims: simulation needs truncation dims");
    try {
        if (type == "spin_boson") {
            SpinBosonSpec spec;
            spec.omega0 = io::number_or(model, "omega0", "/model", spec.omega0);
            spec.k = io::number_or(model, "k", "/model", spec.k);
            p.model = spin_boson_model(spec, bath);
            add_system_observable(p.model, "rho01", projector(2, 1, 0));
            p.psi = qubit_state(model);
        } else if (type == "dimer") {
            p.model = dimer_relative_model(dimer_spec(model, "/model"), bath);
            add_system_observable(p.model, "rho12", projector(2, 1, 0));
            p.psi = site_state(model, 2);
        } else if (type == "polymer") {
            PolymerSpec spec;
            spec.K = static_cast<int>(io::integer_or(model, "sites", "/model", spec.K));
            spec.J = io::number_or(model, "J", "/model", spec.J);
            p.model = polymer_model(spec, {bath});
            p.psi = site_state(model, spec.K);
        } else {
            throw ConfigError("/model/type: expected qubit, spin_boson, dimer or polymer");
        }
    } catch (const ContractError& e) {
        throw ConfigError("/model: " + std::string(e.what()));
    }
    return p;
}

void cmd_simulate(Job& job) {
    Prepared p = prepare_model(job);
    const auto& m = p.model;
    const auto grid = time_grid(job.config, m.unit);
    const json& solver = section(job.config, "solver");
    const std::string method = io::text_or(solver, "method", "/solver", "master");
    const double max_gb = io::number_or(solver, "max_memory_gb", "/solver", 8.0);
    job.log("model dimension " + std::to_string(m.dim()) + ", method " + method);
    Trajectory tr;
    json report = {{"method", method}, {"model", io::model_layout(m)}, {"tolerances", io::ode_tolerances(ode_options(job.config))}};
    if (method == "master") {
        // about eight dense dim x dim work arrays for the integrator
        const double gb = 8.0 * 16.0 * double(m.dim()) * double(m.dim()) / 1e9;
        if (gb > max_gb)
            throw CapacityError("density matrix of dimension " + std::to_string(m.dim()) + " needs about " + io::format_double(gb) +
                                " GB (limit " + io::format_double(max_gb) + "); set solver/method to \"mcwf\" or reduce bath dims");
        EvolveOptions o;
        o.ode = ode_options(job.config);
        tr = evolve_master(m, product_density(m, p.psi * p.psi.adjoint()), grid, StateKind::density, o);
    } else if (method == "mcwf") {
        McwfOptions o;
        o.ode = ode_options(job.config);
        o.trajectories = static_cast<std::size_t>(io::integer_or(solver, "trajectories", "/solver", 1000));
        o.seed = job.stage_seed(2);
        o.threads = job.threads;
        report["mcwf_seed"] = o.seed;
        tr = evolve_mcwf(m, product_vector(m, p.psi), grid, o);
        std::vector<std::string> head = {"t"};
        std::vector<std::vector<double>> cols = {tr.t};
        for (std::size_t j = 0; j < tr.observable_names.size(); ++j) {
            head.insert(head.end(), {tr.observable_names[j] + "_re_stderr", tr.observable_names[j] + "_im_stderr"});
            cols.emplace_back();
            cols.emplace_back();
            for (const auto& e : tr.observable_stderr[j]) {
                cols[cols.size() - 2].push_back(e.real());
                cols.back().push_back(e.imag());
            }
        }
        job.emit("observables_stderr.csv", io::columns_csv(head, cols));
    } else {
        throw ConfigError("/solver/method: expected master or mcwf");
    }
    const auto& d = tr.diagnostics;
    report["diagnostics"] = {{"steps", d.steps},         {"rejected", d.rejected},
                             {"rhs_evaluations", d.rhs_evaluations}, {"trace_drift", d.trace_drift},
                             {"hermiticity_drift", d.hermiticity_drift}, {"min_eigenvalue", d.min_eigenvalue},
                             {"trajectories", d.trajectories}, {"jumps", d.jumps}, {"restarts", d.restarts}};
    job.emit("observables.csv", io::trajectory_csv(tr));
    job.finish(report);
}

// ---------------------------------------------------------------------------

void cmd_spectrum(Job& job) {
    const DimerSpec spec = dimer_spec(section(job.config, "dimer"), "/dimer");
    const SurrogateBath bath = io::surrogate_from_config(io::member(job.config, "bath", ""), "/bath", job.base);
    if (bath.dims.empty()) throw ConfigError("/bath/dims: the spectrum needs truncation dims");
    if (bath.unit == Unit::omega_c) throw ConfigError("/bath/unit: the dimer needs a bath in cm-1 or 100cm-1");
    const auto m = dimer_absorption_model(spec, bath);
    const auto grid = time_grid(job.config, bath.unit);
    job.log("model dimension " + std::to_string(m.dim()));
    const auto c = dipole_correlation(m, grid, ode_options(job.config));
    const double to_cm = bath.unit == Unit::cm1_x100 ? 100.0 : 1.0;

    const json& sp = section(job.config, "spectrum");
    const auto [e_lo, e_hi] = spec.exciton_energies();
    const double lo = io::number_or(sp, "lo", "/spectrum", e_lo - 400.0) / to_cm;
    const double hi = io::number_or(sp, "hi", "/spectrum", e_hi + 400.0) / to_cm;
    const int pad = static_cast<int>(io::integer_or(sp, "pad", "/spectrum", 4));
    const double dt = grid[1] - grid[0];
    const auto omega = padded_frequencies(grid.size(), dt, c.carrier, lo, hi, pad);
    const auto s = absorption_spectrum(c.values, dt, omega, c.carrier);

    std::string head = "# unit: " + unit_name(bath.unit) + "\n# carrier: " + io::format_double(c.carrier) +
                       "\n# frame: rotating at the carrier; lab values are C(t) exp(-i carrier t)\n";
    job.emit("dipole_correlation.csv", head + io::complex_series_csv(c.t, c.values, "C"));
    std::vector<double> w_cm;
    for (double w : omega) w_cm.push_back(w * to_cm);
    job.emit("spectrum.csv", io::spectrum_csv(w_cm, s.S));

    json peaks = json::array();
    for (const auto& pk : find_peaks(w_cm, s.S)) peaks.push_back({{"omega", pk.omega}, {"height", pk.height}, {"fwhm", pk.fwhm}});
    json report = {{"model", io::model_layout(m)},
                   {"C0", {c.values.front().real(), c.values.front().imag()}},
                   {"final_magnitude", s.final_magnitude},
                   {"decayed", s.decayed},
                   {"carrier_cm", c.carrier * to_cm},
                   {"rank_one", c.rank_one},
                   {"steps", c.stats.steps},
                   {"peaks_cm", peaks},
                   {"tolerances", io::ode_tolerances(ode_options(job.config))}};
    if (!s.decayed) job.log("warning: |C(t_max)| = " + io::format_double(s.final_magnitude) + " has not decayed below 1e-3", 0);
    job.finish(report);
}

// ---------------------------------------------------------------------------

void cmd_validate(Job& job) {
    const json& cfg = job.config;
    const double T = io::number(cfg, "temperature", "");
    SurrogateBath bath;
    if (io::has(cfg, "bath")) {
        bath = io::surrogate_from_config(cfg.at("bath"), "/bath", job.base);
    } else if (T == 0.0) {
        bath = presets::ohmic_t0();
    } else if (T == 1.0) {
        bath = presets::ohmic_t1();
    } else if (T == 2.5) {
        bath = presets::ohmic_t2_5();
    } else {
        throw ConfigError("/bath: no preset for this temperature; give a bath");
    }
    if (bath.unit != Unit::omega_c) throw ConfigError("/bath/unit: the spin-boson fixture uses omega_c");
    if (bath.dims.empty()) throw ConfigError("/bath/dims: simulation needs truncation dims");
    SpinBosonSpec spec;
    spec.omega0 = io::number_or(cfg, "omega0", "", spec.omega0);
    spec.k = io::number_or(cfg, "k", "", spec.k);
    spec.bath = presets::ohmic_spec(Beta::from_temperature(T));
    const double threshold = io::number_or(cfg, "threshold", "", 0.05);
    const double floor = io::number_or(cfg, "coherence_floor", "", 0.05);
    const long points = io::integer_or(cfg, "points", "", 201);

    // run until |rho01| falls below floor * 1/2
    double t_end = 0.05;
    while (std::abs(spin_boson_exact(spec, t_end)(0, 1)) > 0.5 * floor) {
        t_end *= 1.05;
        if (t_end > 1e4) throw NumericError("coherence does not decay; check temperature and k");
    }
    const auto grid = ode::uniform_grid(t_end * 1.05, static_cast<std::size_t>(points));
    const auto m = spin_boson_model(spec, bath);
    job.log("model dimension " + std::to_string(m.dim()) + ", t_end " + io::format_double(t_end));
    EvolveOptions o;
    o.ode = ode_options(cfg, 1e-7, 1e-9);
    const auto tr = evolve_master(m, product_density(m, plus_state()), grid, StateKind::density, o);

    std::vector<std::vector<double>> cols(6);
    double worst = 0.0, pop = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const cplx ex = spin_boson_exact(spec, grid[k])(0, 1);
        const cplx sim = tr.reduced[k](0, 1);
        const double e = error_figure({ex}, {sim})[0];
        for (auto [j, v] : {std::pair{0, grid[k]}, {1, ex.real()}, {2, ex.imag()}, {3, sim.real()}, {4, sim.imag()}, {5, e}})
            cols[static_cast<std::size_t>(j)].push_back(v);
        if (std::abs(ex) >= 0.5 * floor) worst = std::max(worst, e);
        pop = std::max(pop, std::abs(tr.reduced[k](0, 0).real() - 0.5));
    }
    job.emit("error_figure.csv", io::columns_csv({"t", "exact_re", "exact_im", "sim_re", "sim_im", "E_f"}, cols));
    const bool pass = worst <= threshold && pop <= 1e-6;
    const json report = {{"temperature", T},       {"dim", m.dim()},     {"t_end", t_end},
                         {"max_E_f", worst},       {"threshold", threshold}, {"population_drift", pop},
                         {"pass", pass},           {"steps", tr.diagnostics.steps},
                         {"tolerances", io::ode_tolerances(o.ode)}};
    job.finish(report);
    std::cout << (pass ? "PASS" : "FAIL") << " max E_f " << worst << " (threshold " << threshold << "), population drift " << pop << '\n';
    if (!pass) throw NumericError("error figure above threshold");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surrogate oscillator baths: fit, search, simulate, spectra"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    int threads = 0, verbosity = 0;
    app.add_option("--threads", threads, "worker threads (default: TSO_THREADS or all cores)")->check(CLI::NonNegativeNumber);
    app.add_flag("-v,--verbose", verbosity, "progress messages on stderr");
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"fit-bath", "fit a bath correlation function with complex exponentials"},
        {"tso", "find surrogate chains reproducing a fit"},
        {"correlation", "tabulate the correlation function of a surrogate bath"},
        {"simulate", "reduced dynamics of a model with surrogate baths"},
        {"spectrum", "dimer dipole correlation and absorption spectrum"},
        {"validate-spinboson", "compare the pure-dephasing spin-boson run with the exact coherence"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("config", config_path, "job config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--out", out_dir, "output directory (overrides config 'output')");
        sub->add_option("--seed", seed, "master seed (overrides config 'seed')");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_config;
    }

    Job job;
    job.command = app.get_subcommands().front()->get_name();
    job.threads = threads;
    job.verbosity = verbosity;
    if (threads > 0) setenv("TSO_THREADS", std::to_string(threads).c_str(), 1);
    try {
        try {
            job.config = json::parse(io::read_file(config_path), nullptr, true, true);
        } catch (const json::parse_error& e) {
            throw ConfigError(config_path + ": " + e.what());
        }
        if (!job.config.is_object()) throw ConfigError(config_path + ": top level must be an object");
        job.base = fs::path(config_path).parent_path();
        if (seed) job.config["seed"] = *seed;
        if (!io::has(job.config, "seed")) job.config["seed"] = std::uint64_t{1};
        const json& sj = job.config["seed"];
        if (!sj.is_number_integer() || (!sj.is_number_unsigned() && sj.get<long>() < 0))
            throw ConfigError("/seed: expected a nonnegative integer");
        job.seed = job.config["seed"].get<std::uint64_t>();
        job.out = !out_dir.empty() ? fs::path(out_dir) : fs::path(io::text_or(job.config, "output", "", "out/" + job.command));
        job.log("seed " + std::to_string(job.seed) + ", output " + job.out.string());

        if (job.command == "fit-bath") cmd_fit(job);
        else if (job.command == "tso") cmd_tso(job);
        else if (job.command == "correlation") cmd_correlation(job);
        else if (job.command == "simulate") cmd_simulate(job);
        else if (job.command == "spectrum") cmd_spectrum(job);
        else cmd_validate(job);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const Infeasible& e) {
        std::cerr << "infeasible: " << e.what() << '\n';
        return exit_infeasible;
    } catch (const CapacityError& e) {
        std::cerr << "capacity: " << e.what() << '\n';
        return exit_numeric;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return exit_numeric;
    } catch (const ContractError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return exit_numeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_numeric;
    }
}
