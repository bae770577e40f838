// models.hpp: spin-boson, vibronic dimer and polymer builders with their analytic references

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tso/lindblad.hpp"
#include "tso/quadrature.hpp"
#include "tso/spectral.hpp"
#include "tso/surrogate.hpp"

namespace tso {

// Energy given in cm^-1 expressed in a frequency unit.
inline double energy_in(double cm, Unit u) {
    switch (u) {
        case Unit::cm1: return cm;
        case Unit::cm1_x100: return cm / 100.0;
        case Unit::omega_c: break;
    }
    throw ContractError("cm^-1 energies need a spectroscopic unit");
}

// Model time units per picosecond.
inline double time_per_ps(Unit u) {
    switch (u) {
        case Unit::cm1: return units::rad_per_ps_per_cm;
        case Unit::cm1_x100: return 100.0 * units::rad_per_ps_per_cm;
        case Unit::omega_c: break;
    }
    throw ContractError("picoseconds need a spectroscopic unit");
}

// ---- spin-boson ----

struct SpinBosonSpec {
    double omega0{4.0};
    double k{1.0};
    BathSpec bath;
};

inline Eigen::MatrixXcd pauli_z() { return Eigen::Vector2cd(1.0, -1.0).asDiagonal(); }

inline LindbladModel spin_boson_model(const SpinBosonSpec& spec, const SurrogateBath& bath) {
    SystemSpec s;
    s.H = 0.5 * spec.omega0 * pauli_z();
    s.couplings = {0.5 * spec.k * pauli_z()};
    s.unit = bath.unit;
    auto m = assemble_model(s, {{bath, 0, "bath"}});
    m.observables.push_back({"sigma_z", detail::kron(detail::to_sparse(pauli_z()), detail::identity(m.environment_dim()))});
    return m;
}

// Gamma(t) = int_0^inf dw/pi J(w) coth(beta w/2) (cos wt - 1) / w^2
inline double dephasing_exponent(const BathSpec& bath, double t) {
    if (t < 0.0) throw DomainError("negative time");
    if (t == 0.0) return 0.0;
    double total = 0.0;
    for (const auto& c : bath.components) {
        auto f = [&](double w) {
            const double s = w == 0.0 ? 0.5 * t : std::sin(0.5 * w * t) / w;
            return -2.0 * s * s * thermal_density(c, bath.beta, w);
        };
        double lo = 0.0, hi;
        if (const auto* tab = std::get_if<Tabulated>(&c)) {
            lo = tab->points.front().first;
            hi = tab->points.back().first;
        } else {
            hi = detail::envelope_cutoff(c, bath.beta, 1e-16);
        }
        const double width = std::min(pi / t, frequency_scale(c));
        const auto r = quad::integrate_panels(f, lo, hi, width, 1e-13, 1e-12);
        if (!r.converged) throw NumericError("dephasing quadrature did not converge", r.error);
        total += r.value;
    }
    return total;
}

inline Eigen::Matrix2cd plus_state() { return Eigen::Matrix2cd::Constant(0.5); }

inline Eigen::Matrix2cd spin_boson_exact(const SpinBosonSpec& spec, double t, const Eigen::Matrix2cd& rho0 = plus_state()) {
    Eigen::Matrix2cd r = rho0;
    const cplx f = std::exp(cplx{spec.k * spec.k * dephasing_exponent(spec.bath, t), -spec.omega0 * t});
    r(0, 1) = f * rho0(0, 1);
    r(1, 0) = std::conj(f) * rho0(1, 0);
    return r;
}

// |f - g| / (|f| + |g|), zero where both vanish.
inline std::vector<double> error_figure(const std::vector<cplx>& f, const std::vector<cplx>& g) {
    if (f.size() != g.size()) throw ContractError("series lengths differ");
    std::vector<double> e(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double den = std::abs(f[k]) + std::abs(g[k]);
        e[k] = den == 0.0 ? 0.0 : std::abs(f[k] - g[k]) / den;
    }
    return e;
}

// ---- dimer ----

struct DimerSpec {
    double E1{12328.0}, E2{12472.0}; // cm^-1
    double J{70.7};                  // cm^-1
    BathSpec bath;
    bool equal_dipoles{true};

    double gap() const { return std::sqrt((E2 - E1) * (E2 - E1) + 4.0 * J * J); }
    // exciton energies, lower first
    std::pair<double, double> exciton_energies() const {
        const double mid = 0.5 * (E1 + E2);
        return {mid - 0.5 * gap(), mid + 0.5 * gap()};
    }
};

inline Eigen::MatrixXcd dimer_hamiltonian(const DimerSpec& spec, Unit u) {
    if (!(spec.gap() > 0.0)) throw DomainError("degenerate dimer");
    Eigen::MatrixXcd h(2, 2);
    h << energy_in(spec.E1, u), energy_in(spec.J, u), energy_in(spec.J, u), energy_in(spec.E2, u);
    return h;
}

// Single-excitation dimer coupled through the relative mode only.
inline LindbladModel dimer_relative_model(const DimerSpec& spec, const SurrogateBath& bath) {
    SystemSpec s;
    s.unit = bath.unit;
    s.H = dimer_hamiltonian(spec, bath.unit);
    s.couplings = {Eigen::Vector2cd(1.0, -1.0).asDiagonal() * cplx{1.0 / std::sqrt(2.0)}};
    auto m = assemble_model(s, {{bath, 0, "relative"}});
    const Eigen::Index de = m.environment_dim();
    for (int n = 0; n < 2; ++n) {
        Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(2, 2);
        p(n, n) = 1.0;
        m.observables.push_back({"p" + std::to_string(n + 1), detail::kron(detail::to_sparse(p), detail::identity(de))});
    }
    return m;
}

// {|g>, |E1>, |E2>} with one chain per site coupled to its projector.
inline LindbladModel dimer_absorption_model(const DimerSpec& spec, const SurrogateBath& bath) {
    SystemSpec s;
    s.unit = bath.unit;
    s.H = Eigen::MatrixXcd::Zero(3, 3);
    s.H.bottomRightCorner(2, 2) = dimer_hamiltonian(spec, bath.unit);
    for (int n = 1; n <= 2; ++n) {
        Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(3, 3);
        p(n, n) = 1.0;
        s.couplings.push_back(p);
    }
    return assemble_model(s, {{bath, 0, "site1"}, {bath, 1, "site2"}});
}

struct DipoleCorrelation {
    std::vector<double> t;
    std::vector<cplx> values; // in the frame rotating at the carrier
    double carrier{0.0};
    bool rank_one{false};
    ode::Stats stats;

    cplx lab(std::size_t k) const { return values[k] * std::exp(cplx{0.0, -carrier * t[k]}); }
};

// Tr[|g>(<E1|+<E2|) e^{Lt}[(|E1>+|E2>)<g| (x) rho_bath]] in |d|^2 units.
inline DipoleCorrelation dipole_correlation(const LindbladModel& model, const std::vector<double>& grid, const ode::Options& opt = {}) {
    if (model.system_dim() != 3) throw ContractError("dipole correlation needs the three-level dimer model");
    const Eigen::Index de = model.environment_dim();
    Eigen::MatrixXcd up = Eigen::MatrixXcd::Zero(3, 3);
    up(1, 0) = up(2, 0) = 1.0;
    const SparseOp mu_up = detail::kron(detail::to_sparse(up), detail::identity(de));
    const SparseOp mu_down = mu_up.adjoint();

    // excitation number commutes with H, so remove the optical carrier
    Eigen::MatrixXcd pe = Eigen::MatrixXcd::Zero(3, 3);
    pe(1, 1) = pe(2, 2) = 1.0;
    const SparseOp p_exc = detail::kron(detail::to_sparse(pe), detail::identity(de));
    LindbladModel m = model;
    double carrier = 0.5 * (model.H.coeff(de, de).real() + model.H.coeff(2 * de, 2 * de).real());
    const SparseOp comm = SparseOp(p_exc * model.H) - SparseOp(model.H * p_exc);
    if (detail::max_abs(comm) > 1e-12 * detail::max_abs(model.H)) carrier = 0.0;
    m.H = model.H - carrier * p_exc;

    DipoleCorrelation out;
    out.carrier = carrier;
    bool vacuum = true;
    for (double n : model.occupation) vacuum = vacuum && n == 0.0;
    RegressionSeries r;
    if (vacuum) {
        r = two_time_correlation(m, mu_down, mu_up, product_vector(m, Eigen::Vector3cd(1.0, 0.0, 0.0)), grid, opt);
    } else {
        Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(3, 3);
        g(0, 0) = 1.0;
        r = two_time_correlation(m, mu_down, mu_up, product_density(m, g), grid, opt);
    }
    out.t = grid;
    out.values = std::move(r.values);
    out.rank_one = r.rank_one;
    out.stats = r.stats;
    return out;
}

struct SpectrumOptions {
    double decay_threshold{1e-3};
    double center{0.0}; // subtracted from omega for the shifted axis
};

struct AbsorptionSpectrum {
    std::vector<double> omega, omega_shifted;
    std::vector<double> S, normalized;
    double final_magnitude{0.0};
    bool decayed{true};
    double imag_residue{0.0}; // of the Hermitian-extended two-sided transform
    double two_sided_mismatch{0.0};
};

// Frequencies of the transform zero-padded to pad times the series length.
inline std::vector<double> padded_frequencies(std::size_t n, double dt, double carrier, double lo, double hi, int pad = 4) {
    const double dw = 2.0 * pi / (static_cast<double>(pad) * static_cast<double>(n) * dt);
    std::vector<double> w;
    for (long k = static_cast<long>(std::ceil((lo - carrier) / dw)); carrier + k * dw <= hi; ++k) w.push_back(carrier + k * dw);
    return w;
}

// S(w) = w Im int_0^T i C(t) e^{iwt} dt by the trapezoid rule on the sample
// grid. c holds C(t) e^{i carrier t}.
inline AbsorptionSpectrum absorption_spectrum(const std::vector<cplx>& c, double dt, const std::vector<double>& omega, double carrier = 0.0,
                                              const SpectrumOptions& opt = {}) {
    if (c.size() < 2 || !(dt > 0.0)) throw DomainError("need at least two samples and dt > 0");
    AbsorptionSpectrum out;
    out.omega = omega;
    out.final_magnitude = std::abs(c.back());
    out.decayed = out.final_magnitude < opt.decay_threshold;
    const std::size_t n = c.size();
    double smax = 0.0;
    for (double w : omega) {
        const double nu = w - carrier;
        const cplx step = std::exp(cplx{0.0, nu * dt});
        cplx ph{1.0}, one{0.0}, two{0.0};
        for (std::size_t k = 0; k < n; ++k, ph *= step) {
            const double wt = (k == 0 || k + 1 == n) ? 0.5 : 1.0;
            const cplx z = c[k] * ph;
            one += wt * z;
            // negative times through C(-t) = C(t)^*
            two += wt * (z + std::conj(z));
        }
        const double s = w * (cplx{0.0, 1.0} * one * dt).imag();
        const cplx s2 = 0.5 * w * two * dt;
        out.S.push_back(s);
        out.imag_residue = std::max(out.imag_residue, std::abs(s2.imag()));
        out.two_sided_mismatch = std::max(out.two_sided_mismatch, std::abs(s2.real() - s));
        smax = std::max(smax, s);
    }
    for (double s : out.S) out.normalized.push_back(smax > 0.0 ? s / smax : 0.0);
    for (double w : omega) out.omega_shifted.push_back(w - opt.center);
    return out;
}

struct Peak {
    double omega{0.0};
    double height{0.0};
    double fwhm{0.0};
};

// Local maxima above rel * global maximum, with interpolated half widths.
inline std::vector<Peak> find_peaks(const std::vector<double>& omega, const std::vector<double>& s, double rel = 0.05) {
    std::vector<Peak> out;
    if (s.size() < 3) return out;
    const double top = *std::max_element(s.begin(), s.end());
    for (std::size_t k = 1; k + 1 < s.size(); ++k) {
        if (!(s[k] > s[k - 1] && s[k] >= s[k + 1] && s[k] > rel * top)) continue;
        // parabolic refinement of the maximum
        const double a = s[k - 1], b = s[k], c = s[k + 1];
        const double den = a - 2.0 * b + c;
        const double off = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
        const double h = omega[k + 1] - omega[k];
        Peak p;
        p.omega = omega[k] + off * h;
        p.height = b - 0.25 * (a - c) * off;
        const double half = 0.5 * p.height;
        std::size_t l = k, r = k;
        while (l > 0 && s[l] > half) --l;
        while (r + 1 < s.size() && s[r] > half) ++r;
        const double wl = s[l] > half ? omega[l] : omega[l] + (half - s[l]) / (s[l + 1] - s[l]) * (omega[l + 1] - omega[l]);
        const double wr = s[r] > half ? omega[r] : omega[r - 1] + (s[r - 1] - half) / (s[r - 1] - s[r]) * (omega[r] - omega[r - 1]);
        p.fwhm = wr - wl;
        out.push_back(p);
    }
    return out;
}

// ---- polymer ----

struct PolymerSpec {
    int K{3};
    double J{200.0}; // cm^-1
    BathSpec bath;
};

struct PolymerThermalMode {
    ThermalMode mode;
    int dim{2};
};

// Homogeneous tight-binding chain; every site gets its own copy of each bath
// (and of the thermal mode) coupled to the site projector.
inline LindbladModel polymer_model(const PolymerSpec& spec, const std::vector<SurrogateBath>& site_baths,
                                   const std::optional<PolymerThermalMode>& thermal = std::nullopt) {
    if (spec.K < 2) throw DomainError("polymer needs at least two sites");
    const Unit u = site_baths.empty() ? Unit::cm1 : site_baths.front().unit;
    SystemSpec s;
    s.unit = u;
    s.H = Eigen::MatrixXcd::Zero(spec.K, spec.K);
    for (int n = 0; n + 1 < spec.K; ++n) s.H(n, n + 1) = s.H(n + 1, n) = energy_in(spec.J, u);
    for (int n = 0; n < spec.K; ++n) {
        Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(spec.K, spec.K);
        p(n, n) = 1.0;
        s.couplings.push_back(p);
    }
    std::vector<BathAttachment> baths;
    std::vector<ThermalAttachment> modes;
    for (int n = 0; n < spec.K; ++n) {
        for (std::size_t b = 0; b < site_baths.size(); ++b)
            baths.push_back({site_baths[b], static_cast<std::size_t>(n), "site" + std::to_string(n + 1) + ".bath" + std::to_string(b + 1)});
        if (thermal) modes.push_back({thermal->mode, thermal->dim, static_cast<std::size_t>(n), "site" + std::to_string(n + 1) + ".thermal"});
    }
    auto m = assemble_model(s, baths, modes);
    const Eigen::Index de = m.environment_dim();
    for (int n = 0; n < spec.K; ++n) {
        Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(spec.K, spec.K);
        p(n, n) = 1.0;
        m.observables.push_back({"p" + std::to_string(n + 1), detail::kron(detail::to_sparse(p), detail::identity(de))});
    }
    return m;
}

} // namespace tso
