// spectral.hpp: spectral densities and exact environmental correlation functions

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "tso/core.hpp"
#include "tso/quadrature.hpp"
#include "tso/special.hpp"

namespace tso {

// J(w) = scale * pi * w * exp(-w / cutoff)
struct Ohmic {
    double cutoff{1.0};
    double scale{1.0};
};

// J(w) = sum_a rho_a w^5 / (2 * 9! * W_a^4) * exp(-sqrt(w / W_a))
struct AdolphsRenger {
    double cutoff1{0.557};
    double cutoff2{1.936};
    double weight1{288.0 / 5.0 * 8.0 / 13.0};
    double weight2{288.0 / 5.0 * 5.0 / 13.0};
};

// Lorentzian pair at +-center, odd in w, reorganization energy huang_rhys * center.
struct AntisymLorentzian {
    double center{1.0};
    double width{0.1};
    double huang_rhys{0.0};
};

// Piecewise-linear J on sorted (w, J) points; integrals run over the table range.
struct Tabulated {
    std::vector<std::pair<double, double>> points;
};

using SpectralComponent = std::variant<Ohmic, AdolphsRenger, AntisymLorentzian, Tabulated>;

// Inverse temperature with an exact zero-temperature state.
class Beta {
public:
    static Beta zero_temperature() { return Beta(); }
    static Beta value(double b) {
        if (!(b > 0.0) || !std::isfinite(b)) throw DomainError("beta must be positive and finite");
        Beta r;
        r.infinite_ = false;
        r.value_ = b;
        return r;
    }
    // T in the same energy units as the spectral density (k_B = 1)
    static Beta from_temperature(double T) {
        if (T < 0.0) throw DomainError("negative temperature");
        return T == 0.0 ? zero_temperature() : value(1.0 / T);
    }
    bool is_infinite() const { return infinite_; }
    double get() const {
        if (infinite_) throw DomainError("beta is infinite");
        return value_;
    }
    double temperature() const { return infinite_ ? 0.0 : 1.0 / value_; }
    bool operator==(const Beta& o) const { return infinite_ == o.infinite_ && (infinite_ || value_ == o.value_); }

private:
    Beta() = default;
    bool infinite_{true};
    double value_{0.0};
};

inline void validate(const SpectralComponent& c) {
    std::visit([](const auto& x) {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, Ohmic>) {
            if (!(x.cutoff > 0.0)) throw DomainError("ohmic cutoff must be positive");
            if (!(x.scale >= 0.0)) throw DomainError("ohmic scale must be nonnegative");
        } else if constexpr (std::is_same_v<X, AdolphsRenger>) {
            if (!(x.cutoff1 > 0.0 && x.cutoff2 > 0.0)) throw DomainError("adolphs-renger cutoffs must be positive");
            if (!(x.weight1 >= 0.0 && x.weight2 >= 0.0)) throw DomainError("adolphs-renger weights must be nonnegative");
        } else if constexpr (std::is_same_v<X, AntisymLorentzian>) {
            if (!(x.center > 0.0 && x.width > 0.0)) throw DomainError("lorentzian center and width must be positive");
            if (!(x.huang_rhys >= 0.0)) throw DomainError("huang-rhys factor must be nonnegative");
        } else {
            if (x.points.size() < 2) throw DomainError("tabulated density needs at least two points");
            for (std::size_t i = 0; i < x.points.size(); ++i) {
                if (x.points[i].first < 0.0 || x.points[i].second < 0.0)
                    throw DomainError("tabulated density must be nonnegative on w >= 0");
                if (i > 0 && !(x.points[i].first > x.points[i - 1].first))
                    throw DomainError("tabulated frequencies must be strictly increasing");
            }
            if (x.points.front().first == 0.0 && x.points.front().second != 0.0)
                throw DomainError("tabulated density must vanish at w = 0");
        }
    }, c);
}

struct BathSpec {
    std::vector<SpectralComponent> components;
    Beta beta{Beta::zero_temperature()};
    Unit unit{Unit::omega_c};

    BathSpec() = default;
    BathSpec(std::vector<SpectralComponent> comps, Beta b, Unit u = Unit::omega_c)
        : components(std::move(comps)), beta(b), unit(u) {
        for (const auto& c : components) validate(c);
    }
};

struct CorrelationSeries {
    double dt{0.0};
    std::vector<cplx> values;

    std::size_t size() const { return values.size(); }
    double time(std::size_t k) const { return dt * static_cast<double>(k); }
    double t_max() const { return values.empty() ? 0.0 : time(values.size() - 1); }
};

namespace detail {

inline double ar_term_over_omega(double w, double cutoff, double weight) {
    constexpr double norm = 2.0 * 362880.0; // 2 * 9!
    const double x = w / cutoff;
    return weight * x * x * x * x * std::exp(-std::sqrt(x)) / norm;
}

inline double tabulated_value(const Tabulated& tab, double w) {
    const auto& p = tab.points;
    if (w < p.front().first || w > p.back().first)
        throw DomainError("tabulated density evaluated outside its range (w = " + std::to_string(w) + ")");
    auto it = std::upper_bound(p.begin(), p.end(), w, [](double v, const auto& q) { return v < q.first; });
    if (it == p.end()) return p.back().second;
    if (it == p.begin()) return p.front().second;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double s = (w - lo.first) / (hi.first - lo.first);
    return lo.second + s * (hi.second - lo.second);
}

// y coth(y), smooth at y = 0
inline double y_coth_y(double y) {
    if (std::abs(y) < 1e-4) return 1.0 + y * y / 3.0;
    return y / std::tanh(y);
}

// x / (1 - exp(-x)), smooth at x = 0
inline double bose_factor_x(double x) {
    if (std::abs(x) < 1e-8) return 1.0 + 0.5 * x;
    return x / (-std::expm1(-x));
}

} // namespace detail

// J(w) / w for w >= 0 with the w -> 0 limit taken analytically.
inline double j_over_omega(const SpectralComponent& c, double w) {
    if (w < 0.0) throw DomainError("spectral density evaluated at negative frequency");
    return std::visit([w](const auto& x) -> double {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, Ohmic>) {
            return x.scale * pi * std::exp(-w / x.cutoff);
        } else if constexpr (std::is_same_v<X, AdolphsRenger>) {
            return detail::ar_term_over_omega(w, x.cutoff1, x.weight1) +
                   detail::ar_term_over_omega(w, x.cutoff2, x.weight2);
        } else if constexpr (std::is_same_v<X, AntisymLorentzian>) {
            const double W = x.center, G = x.width;
            const double dm = 2.0 * (w - W), dp = 2.0 * (w + W);
            return x.huang_rhys * 8.0 * G * W * (4.0 * W * W + G * G) / ((dm * dm + G * G) * (dp * dp + G * G));
        } else {
            if (w == 0.0) {
                const auto& p = x.points;
                if (p.front().first != 0.0) throw DomainError("tabulated density evaluated outside its range (w = 0)");
                return (p[1].second - p[0].second) / (p[1].first - p[0].first);
            }
            return detail::tabulated_value(x, w) / w;
        }
    }, c);
}

inline double evaluate_j(const SpectralComponent& c, double w) {
    if (w < 0.0) throw DomainError("spectral density evaluated at negative frequency");
    if (const auto* tab = std::get_if<Tabulated>(&c)) return detail::tabulated_value(*tab, w);
    return w == 0.0 ? 0.0 : w * j_over_omega(c, w);
}

inline double evaluate_j(const BathSpec& spec, double w) {
    double s = 0.0;
    for (const auto& c : spec.components) s += evaluate_j(c, w);
    return s;
}

// Characteristic frequency used to scale integration ranges.
inline double frequency_scale(const SpectralComponent& c) {
    return std::visit([](const auto& x) -> double {
        using X = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<X, Ohmic>) return x.cutoff;
        else if constexpr (std::is_same_v<X, AdolphsRenger>) return 100.0 * std::max(x.cutoff1, x.cutoff2);
        else if constexpr (std::is_same_v<X, AntisymLorentzian>) return x.center;
        else return x.points.back().first;
    }, c);
}

inline double reorganization_energy(const SpectralComponent& c, double rel_tol = 1e-10) {
    auto f = [&](double w) { return j_over_omega(c, w) / pi; };
    quad::Result<double> r;
    if (const auto* tab = std::get_if<Tabulated>(&c)) {
        const double lo = tab->points.front().first, hi = tab->points.back().first;
        auto g = [&](double w) { return detail::tabulated_value(*tab, w) / (pi * w); };
        if (lo == 0.0) r = quad::integrate(f, lo, hi, 0.0, rel_tol);
        else r = quad::integrate(g, lo, hi, 0.0, rel_tol);
    } else if (const auto* al = std::get_if<AntisymLorentzian>(&c)) {
        // split at the peak so the narrow line is resolved
        const double W = al->center;
        auto a = quad::integrate(f, 0.0, W, 0.0, rel_tol, 20000);
        auto b = quad::integrate_to_infinity(f, W, W, 0.0, rel_tol, 20000);
        r.value = a.value + b.value;
        r.error = a.error + b.error;
        r.converged = a.converged && b.converged;
    } else {
        r = quad::integrate_to_infinity(f, 0.0, frequency_scale(c), 0.0, rel_tol, 20000);
    }
    if (!r.converged) throw NumericError("reorganization energy quadrature did not converge", r.error);
    return r.value;
}

inline double reorganization_energy(const BathSpec& spec) {
    double s = 0.0;
    for (const auto& c : spec.components) s += reorganization_energy(c);
    return s;
}

// Kernel J(w) coth(beta w / 2) / pi, the real part of the integrand at t = 0.
inline double thermal_density(const SpectralComponent& c, const Beta& beta, double w) {
    const double jw = j_over_omega(c, w);
    const double wcoth = beta.is_infinite() ? w : (2.0 / beta.get()) * detail::y_coth_y(0.5 * beta.get() * w);
    return jw * wcoth / pi;
}

namespace detail {

// Frequency beyond which the integrand envelope is below rel * peak.
inline double envelope_cutoff(const SpectralComponent& c, const Beta& beta, double rel) {
    const double s = frequency_scale(c);
    if (const auto* tab = std::get_if<Tabulated>(&c)) return tab->points.back().first;
    double peak = 0.0, w = s * 1e-3;
    for (; w < 1e4 * s; w *= 1.25) {
        const double e = std::abs(thermal_density(c, beta, w));
        peak = std::max(peak, e);
        if (w > 2.0 * s && e < rel * peak) return w;
    }
    return 1e4 * s;
}

inline cplx ohmic_closed_form(const Ohmic& o, const Beta& beta, double t) {
    const double wc = o.cutoff;
    const cplx z = 1.0 + I * wc * t;
    cplx c = wc * wc / (z * z);
    if (!beta.is_infinite()) {
        const double b = beta.get();
        c += (trigamma(1.0 + z / (b * wc)) + trigamma(1.0 + std::conj(z) / (b * wc))) / (b * b);
    }
    return o.scale * c;
}

// 1 / (1 - exp(-x)) for complex x without overflow.
inline cplx bose_inverse(cplx x) {
    if (x.real() >= 0.0) return 1.0 / (1.0 - std::exp(-x));
    const cplx e = std::exp(x);
    return -e / (1.0 - e);
}

// Residue sum for the antisymmetrized Lorentzian: the two lower-half-plane
// poles of J plus the Matsubara series (an integral at zero temperature).
inline cplx lorentzian_residues(const AntisymLorentzian& a, const Beta& beta, double t) {
    const double W = a.center, G = a.width;
    const double pref = a.huang_rhys * 8.0 * G * W * (4.0 * W * W + G * G);
    auto jc = [&](cplx w) {
        const cplx dm = 2.0 * (w - W), dp = 2.0 * (w + W);
        return pref * w / ((dm * dm + G * G) * (dp * dp + G * G));
    };
    const cplx p1{W, -0.5 * G}, p2{-W, -0.5 * G};
    const cplx r1 = pref * p1 * (I / (4.0 * G)) / (4.0 * (p1 + W) * (p1 + W) + G * G);
    const cplx r2 = pref * p2 * (I / (4.0 * G)) / (4.0 * (p2 - W) * (p2 - W) + G * G);
    cplx poles;
    if (beta.is_infinite()) {
        poles = r1 * std::exp(-I * p1 * t);
    } else {
        const double b = beta.get();
        poles = r1 * std::exp(-I * p1 * t) * bose_inverse(b * p1) + r2 * std::exp(-I * p2 * t) * bose_inverse(b * p2);
    }
    // Matsubara part: f(nu) = J(-i nu) exp(-nu t) is purely imaginary
    auto f = [&](double nu) { return (jc(cplx{0.0, -nu}) * std::exp(-nu * t)).imag(); };
    double mats = 0.0;
    if (beta.is_infinite()) {
        auto r = quad::integrate_to_infinity(f, 0.0, W, 1e-300, 1e-13, 20000);
        mats = r.value / (2.0 * pi);
    } else {
        const double b = beta.get();
        const double nu1 = 2.0 * pi / b;
        const long kmax = 4000;
        long k = 1;
        for (; k <= kmax; ++k) {
            const double term = f(nu1 * static_cast<double>(k));
            mats += term;
            if (std::abs(term) < 1e-18 * std::abs(mats) && k > 8) break;
        }
        if (k > kmax) {
            // remaining terms by the midpoint rule in reverse
            auto r = quad::integrate_to_infinity(f, (static_cast<double>(kmax) + 0.5) * nu1, W, 1e-300, 1e-12, 20000);
            mats += r.value / nu1;
        }
        mats /= b;
    }
    return -2.0 * I * (poles + I * mats);
}

} // namespace detail

// C(t) by direct oscillatory quadrature of the defining integral.
inline cplx correlation_quadrature(const SpectralComponent& c, const Beta& beta, double t, double rel_tol = 1e-12) {
    if (t < 0.0) throw DomainError("negative time; use extend_negative_time");
    auto re = [&](double w) { return thermal_density(c, beta, w) * std::cos(w * t); };
    auto im = [&](double w) { return -j_over_omega(c, w) * w * std::sin(w * t) / pi; };
    auto both = [&](double w) { return cplx{re(w), im(w)}; };
    const double s = frequency_scale(c);
    // absolute scale from the t = 0 integral of the envelope
    double lo = 0.0, hi;
    if (const auto* tab = std::get_if<Tabulated>(&c)) {
        lo = tab->points.front().first;
        hi = tab->points.back().first;
    } else {
        hi = detail::envelope_cutoff(c, beta, 1e-16);
    }
    quad::Result<cplx> r;
    double atol = 0.0;
    {
        auto env = [&](double w) { return std::abs(thermal_density(c, beta, w)); };
        auto e = quad::integrate(env, lo, hi, 0.0, 1e-6, 20000);
        atol = rel_tol * e.value;
    }
    const double width = t > 0.0 ? std::min(pi / (4.0 * t), s) : s;
    if ((hi - lo) / width > 2e7) throw NumericError("correlation quadrature needs too many panels; reduce t");
    r = quad::integrate_panels(both, lo, hi, width, atol, 1e-13);
    if (!r.converged) throw NumericError("correlation quadrature did not converge", r.error);
    return r.value;
}

inline cplx thermal_correlation(const SpectralComponent& c, const Beta& beta, double t) {
    if (t < 0.0) throw DomainError("negative time; use extend_negative_time");
    if (const auto* o = std::get_if<Ohmic>(&c)) return detail::ohmic_closed_form(*o, beta, t);
    if (const auto* a = std::get_if<AntisymLorentzian>(&c)) return detail::lorentzian_residues(*a, beta, t);
    return correlation_quadrature(c, beta, t);
}

inline cplx thermal_correlation(const BathSpec& spec, double t) {
    cplx s{0.0, 0.0};
    for (const auto& c : spec.components) s += thermal_correlation(c, spec.beta, t);
    return s;
}

// Two-sided series on [-t_max, t_max] with C(-t) = conj(C(t)).
inline std::vector<cplx> extend_negative_time(const CorrelationSeries& c) {
    const std::size_t n = c.size();
    std::vector<cplx> out;
    if (n == 0) return out;
    out.reserve(2 * n - 1);
    for (std::size_t k = n - 1; k >= 1; --k) out.push_back(std::conj(c.values[k]));
    for (std::size_t k = 0; k < n; ++k) out.push_back(c.values[k]);
    return out;
}

// C(w) = 2 J_odd(w) / (1 - exp(-beta w)); at T = 0 this is 2 J(w) theta(w).
inline double correlation_fourier(const SpectralComponent& c, const Beta& beta, double w) {
    const double jw = j_over_omega(c, std::abs(w));
    if (beta.is_infinite()) return w > 0.0 ? 2.0 * w * jw : 0.0;
    const double b = beta.get();
    return jw * (2.0 / b) * detail::bose_factor_x(b * w);
}

inline double correlation_fourier(const BathSpec& spec, double w) {
    double s = 0.0;
    for (const auto& c : spec.components) s += correlation_fourier(c, spec.beta, w);
    return s;
}

inline CorrelationSeries sample_correlation(const BathSpec& spec, double t_max, std::size_t n) {
    if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
    if (n < 2) throw DomainError("need at least two samples");
    CorrelationSeries s;
    s.dt = t_max / static_cast<double>(n - 1);
    s.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) s.values[k] = thermal_correlation(spec, s.time(k));
    s.values[0] = cplx{s.values[0].real(), 0.0};
    return s;
}

// Adolphs-Renger density, both cutoffs and weights in cm^-1.
inline AdolphsRenger adolphs_renger_cm() { return AdolphsRenger{}; }

} // namespace tso
