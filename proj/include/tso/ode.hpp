// ode.hpp: Dormand-Prince 5(4) with step control and output on a fixed grid

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tso/core.hpp"

namespace tso::ode {

struct Options {
    double rtol{1e-8};
    double atol{1e-10};
    double h_initial{0.0}; // 0: estimated from the first derivative
    double h_max{0.0};     // 0: unlimited
    long max_steps{50'000'000};
};

struct Stats {
    long steps{0};
    long rejected{0};
    long rhs_evaluations{0};
};

namespace detail {

// Butcher tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;

} // namespace detail

// Embedded pair on dense Eigen arrays. f(t, y, dy) writes dy = y'(t).
template <class M>
class DormandPrince {
public:
    explicit DormandPrince(const Options& o = {}) : opt_(o) {}

    const Stats& stats() const { return stats_; }
    const Options& options() const { return opt_; }

    // One trial step of size h from (t, y) with derivative k1 = f(t, y).
    // Returns the scaled error norm; y_out holds the fifth-order solution and
    // k_out its derivative (first stage of the next step).
    template <class F>
    double attempt(F& f, double t, const M& y, const M& k1, double h, M& y_out, M& k_out) {
        using namespace detail;
        resize_like(y);
        tmp_ = y + h * a21 * k1;
        f(t + c2 * h, tmp_, k2_);
        tmp_ = y + h * (a31 * k1 + a32 * k2_);
        f(t + c3 * h, tmp_, k3_);
        tmp_ = y + h * (a41 * k1 + a42 * k2_ + a43 * k3_);
        f(t + c4 * h, tmp_, k4_);
        tmp_ = y + h * (a51 * k1 + a52 * k2_ + a53 * k3_ + a54 * k4_);
        f(t + c5 * h, tmp_, k5_);
        tmp_ = y + h * (a61 * k1 + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
        f(t + h, tmp_, k6_);
        y_out = y + h * (b1 * k1 + b3 * k3_ + b4 * k4_ + b5 * k5_ + b6 * k6_);
        f(t + h, y_out, k_out);
        stats_.rhs_evaluations += 6;
        tmp_ = h * (e1 * k1 + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k_out);
        double err = 0.0;
        const auto n = y.size();
        const auto* e = tmp_.data();
        const auto* a = y.data();
        const auto* b = y_out.data();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = opt_.atol + opt_.rtol * std::max(std::abs(a[i]), std::abs(b[i]));
            err = std::max(err, std::abs(e[i]) / sc);
        }
        return std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
    }

    // Initial step from the derivative scale.
    template <class F>
    double initial_step(F& f, double t, const M& y, const M& k1, double span) {
        if (opt_.h_initial > 0.0) return std::min(opt_.h_initial, span);
        auto scaled = [&](const M& v) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < v.size(); ++i) {
                const double sc = opt_.atol + opt_.rtol * std::abs(y.data()[i]);
                s = std::max(s, std::abs(v.data()[i]) / sc);
            }
            return s;
        };
        const double d0 = scaled(y), d1 = scaled(k1);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 * std::max(span, 1e-300) : 0.01 * d0 / d1;
        h0 = std::min(h0, span);
        M y1 = y + h0 * k1, k2;
        f(t + h0, y1, k2);
        ++stats_.rhs_evaluations;
        const double d2 = scaled(M(k2 - k1)) / h0;
        const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / std::max(d1, d2), 0.2);
        return std::min({100.0 * h0, h1, span});
    }

    // Integrates from grid[0] through every grid point; observe(k, t, y) is
    // called at each of them, including the start.
    template <class F, class Obs>
    void integrate(F&& f, M& y, const std::vector<double>& grid, Obs&& observe) {
        if (grid.empty()) return;
        for (std::size_t k = 1; k < grid.size(); ++k)
            if (!(grid[k] > grid[k - 1])) throw ContractError("time grid must be strictly increasing");
        double t = grid.front();
        observe(std::size_t{0}, t, static_cast<const M&>(y));
        if (grid.size() == 1) return;
        M k1, y_new, k_new;
        f(t, y, k1);
        ++stats_.rhs_evaluations;
        double h = initial_step(f, t, y, k1, grid.back() - t);
        for (std::size_t k = 1; k < grid.size(); ++k) {
            const double target = grid[k];
            while (t < target) {
                if (stats_.steps + stats_.rejected > opt_.max_steps) throw NumericError("step budget exhausted at t = " + std::to_string(t));
                if (opt_.h_max > 0.0) h = std::min(h, opt_.h_max);
                bool last = false;
                if (t + h >= target || t + 1.01 * h >= target) {
                    h = target - t;
                    last = true;
                }
                const double err = attempt(f, t, y, k1, h, y_new, k_new);
                if (err <= 1.0) {
                    t = last ? target : t + h;
                    y.swap(y_new);
                    k1.swap(k_new);
                    ++stats_.steps;
                    const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                    if (!last) h *= fac;
                    else h = std::max(h, h * fac);
                } else {
                    ++stats_.rejected;
                    h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
                }
                if (!(h > 1e-14 * std::max(1.0, std::abs(t))))
                    throw NumericError("step size collapsed at t = " + std::to_string(t), h);
            }
            observe(k, t, static_cast<const M&>(y));
        }
    }

private:
    void resize_like(const M& y) {
        if (tmp_.rows() != y.rows() || tmp_.cols() != y.cols()) {
            tmp_.resize(y.rows(), y.cols());
            k2_.resize(y.rows(), y.cols());
            k3_.resize(y.rows(), y.cols());
            k4_.resize(y.rows(), y.cols());
            k5_.resize(y.rows(), y.cols());
            k6_.resize(y.rows(), y.cols());
        }
    }

    Options opt_;
    Stats stats_;
    M tmp_, k2_, k3_, k4_, k5_, k6_;
};

inline std::vector<double> uniform_grid(double t_max, std::size_t n) {
    if (n < 2 || !(t_max > 0.0)) throw DomainError("grid needs t_max > 0 and at least two points");
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) g[k] = t_max * static_cast<double>(k) / static_cast<double>(n - 1);
    return g;
}

} // namespace tso::ode
