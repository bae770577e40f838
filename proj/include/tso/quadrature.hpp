// quadrature.hpp: adaptive Gauss-Kronrod integration for real and complex integrands

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <queue>
#include <type_traits>
#include <vector>

namespace tso::quad {

template <class T>
struct Result {
    T value{};
    double error{0.0};
    bool converged{true};
    int evaluations{0};
};

namespace detail {

inline constexpr std::array<double, 8> xgk{
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> wgk{
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> wg{
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class T>
struct Segment {
    double a, b;
    T value;
    double error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
auto gk15(F& f, double a, double b) {
    using T = std::decay_t<decltype(f(a))>;
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    T fc = f(c);
    T kron = fc * wgk[7];
    T gauss = fc * wg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * xgk[j];
        T s = f(c - dx) + f(c + dx);
        kron += s * wgk[j];
        if (j % 2 == 1) gauss += s * wg[j / 2];
    }
    kron *= h;
    gauss *= h;
    double err = std::abs(kron - gauss);
    // QUADPACK-style sharpening of the raw difference
    if (err > 0.0) err = std::max(err * std::min(1.0, std::pow(200.0 * err / (std::abs(kron) + 1e-300), 1.5)), 50.0 * std::numeric_limits<double>::epsilon() * std::abs(kron));
    return Segment<T>{a, b, kron, err};
}

} // namespace detail

// Globally adaptive GK15 on [a, b]; bisects the worst segment until the
// summed error estimate is below max(abs_tol, rel_tol*|I|).
template <class F>
auto integrate(F&& f, double a, double b, double abs_tol, double rel_tol, int max_segments = 4000) {
    using T = std::decay_t<decltype(f(a))>;
    Result<T> out;
    if (a == b) return out;
    std::priority_queue<detail::Segment<T>> heap;
    auto s0 = detail::gk15(f, a, b);
    heap.push(s0);
    T total = s0.value;
    double err = s0.error;
    out.evaluations = 15;
    while (err > std::max(abs_tol, rel_tol * std::abs(total))) {
        if (static_cast<int>(heap.size()) >= max_segments) {
            out.converged = false;
            break;
        }
        auto worst = heap.top();
        heap.pop();
        const double m = 0.5 * (worst.a + worst.b);
        if (m <= worst.a || m >= worst.b) {
            out.converged = false;
            heap.push(worst);
            break;
        }
        auto l = detail::gk15(f, worst.a, m);
        auto r = detail::gk15(f, m, worst.b);
        out.evaluations += 30;
        total += l.value + r.value - worst.value;
        err += l.error + r.error - worst.error;
        heap.push(l);
        heap.push(r);
    }
    // re-sum to shed accumulated rounding from the running updates
    T sum{};
    double esum = 0.0;
    while (!heap.empty()) {
        sum += heap.top().value;
        esum += heap.top().error;
        heap.pop();
    }
    out.value = sum;
    out.error = esum;
    return out;
}

// Integral over [a, inf) through w = a + s*x/(1-x).
template <class F>
auto integrate_to_infinity(F&& f, double a, double scale, double abs_tol, double rel_tol, int max_segments = 4000) {
    auto g = [&](double x) {
        const double one_minus = 1.0 - x;
        const double w = a + scale * x / one_minus;
        using T = std::decay_t<decltype(f(a))>;
        const double jac = scale / (one_minus * one_minus);
        if (!std::isfinite(w) || !std::isfinite(jac)) return T{};
        return f(w) * jac;
    };
    return integrate(g, 0.0, 1.0, abs_tol, rel_tol, max_segments);
}

// Splits [a, b] into panels no wider than max_width and integrates each
// adaptively; used for oscillatory integrands.
template <class F>
auto integrate_panels(F&& f, double a, double b, double max_width, double abs_tol, double rel_tol) {
    using T = std::decay_t<decltype(f(a))>;
    Result<T> out;
    const double len = b - a;
    if (len <= 0.0) return out;
    const long n = std::max(1L, static_cast<long>(std::ceil(len / max_width)));
    const double w = len / static_cast<double>(n);
    const double panel_tol = abs_tol / static_cast<double>(n);
    for (long k = 0; k < n; ++k) {
        const double lo = a + w * static_cast<double>(k);
        const double hi = (k + 1 == n) ? b : lo + w;
        auto r = integrate(f, lo, hi, panel_tol, rel_tol, 200);
        out.value += r.value;
        out.error += r.error;
        out.evaluations += r.evaluations;
        out.converged = out.converged && r.converged;
    }
    return out;
}

} // namespace tso::quad
