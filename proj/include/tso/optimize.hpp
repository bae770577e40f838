// optimize.hpp: Levenberg-Marquardt with numeric Jacobian, Nelder-Mead simplex

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace tso::opt {

struct LmOptions {
    int max_iterations{200};
    double ftol{1e-15};     // relative cost decrease that counts as stagnation
    double xtol{1e-14};
    double initial_damping{1e-3};
    double fd_step{1e-7};
};

struct LmResult {
    Eigen::VectorXd x;
    double cost{0.0};            // 0.5 * |r|^2
    std::vector<double> history; // cost after each accepted step, starting with the seed
    int iterations{0};
    bool converged{false};
};

// Minimizes 0.5*|r(x)|^2. Only steps that lower the cost are accepted, so the
// history is nonincreasing.
template <class F>
LmResult levenberg_marquardt(F&& residual, Eigen::VectorXd x0, const LmOptions& o = {}) {
    LmResult res;
    const Eigen::Index n = x0.size();
    Eigen::VectorXd r = residual(x0);
    double cost = 0.5 * r.squaredNorm();
    res.history.push_back(cost);
    double mu = o.initial_damping;
    Eigen::VectorXd x = x0;
    Eigen::MatrixXd J(r.size(), n);
    for (int it = 0; it < o.max_iterations; ++it) {
        res.iterations = it + 1;
        if (!std::isfinite(cost) || cost == 0.0) {
            res.converged = cost == 0.0;
            break;
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            const double h = o.fd_step * std::max(1.0, std::abs(x[j]));
            Eigen::VectorXd xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            J.col(j) = (residual(xp) - residual(xm)) / (2.0 * h);
        }
        const Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < 1e-300) {
            res.converged = true;
            break;
        }
        bool accepted = false;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::MatrixXd B = A;
            for (Eigen::Index j = 0; j < n; ++j) B(j, j) += mu * std::max(A(j, j), 1e-12);
            const Eigen::VectorXd step = B.ldlt().solve(-g);
            if (!step.allFinite()) {
                mu *= 10.0;
                continue;
            }
            const Eigen::VectorXd xn = x + step;
            const Eigen::VectorXd rn = residual(xn);
            const double cn = 0.5 * rn.squaredNorm();
            if (std::isfinite(cn) && cn < cost) {
                const double decrease = (cost - cn) / cost;
                const double stepn = step.norm();
                x = xn;
                r = rn;
                cost = cn;
                res.history.push_back(cost);
                mu = std::max(mu / 3.0, 1e-15);
                accepted = true;
                if (decrease < o.ftol || stepn < o.xtol * (x.norm() + o.xtol)) res.converged = true;
                break;
            }
            mu *= 4.0;
        }
        if (!accepted) {
            res.converged = true;
            break;
        }
        if (res.converged) break;
    }
    res.x = x;
    res.cost = cost;
    return res;
}

struct NmOptions {
    int max_evaluations{4000};
    double ftol{1e-14};
    double xtol{1e-12};
};

struct NmResult {
    Eigen::VectorXd x;
    double value{0.0};
    int evaluations{0};
};

template <class F>
NmResult nelder_mead(F&& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& step, const NmOptions& o = {}) {
    const Eigen::Index n = x0.size();
    std::vector<Eigen::VectorXd> p(n + 1, x0);
    std::vector<double> v(n + 1);
    for (Eigen::Index j = 0; j < n; ++j) p[j + 1][j] += step[j];
    int evals = 0;
    for (auto k = 0; k <= n; ++k, ++evals) v[k] = f(p[k]);
    std::vector<int> idx(n + 1);
    while (evals < o.max_evaluations) {
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
        const int best = idx.front(), worst = idx.back(), second = idx[n - 1];
        double size = 0.0;
        for (auto k = 0; k <= n; ++k) size = std::max(size, (p[k] - p[best]).lpNorm<Eigen::Infinity>());
        if (std::abs(v[worst] - v[best]) <= o.ftol * (std::abs(v[best]) + 1e-300) && size <= o.xtol * (1.0 + p[best].norm()))
            break;
        if (size <= 1e-15 * (1.0 + p[best].norm())) break;
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        for (auto k = 0; k <= n; ++k)
            if (k != worst) c += p[k];
        c /= static_cast<double>(n);
        const Eigen::VectorXd xr = c + (c - p[worst]);
        const double fr = f(xr);
        ++evals;
        if (fr < v[best]) {
            const Eigen::VectorXd xe = c + 2.0 * (c - p[worst]);
            const double fe = f(xe);
            ++evals;
            if (fe < fr) { p[worst] = xe; v[worst] = fe; }
            else { p[worst] = xr; v[worst] = fr; }
        } else if (fr < v[second]) {
            p[worst] = xr;
            v[worst] = fr;
        } else {
            const bool outside = fr < v[worst];
            const Eigen::VectorXd xc = outside ? Eigen::VectorXd(c + 0.5 * (xr - c)) : Eigen::VectorXd(c + 0.5 * (p[worst] - c));
            const double fc = f(xc);
            ++evals;
            if (fc < std::min(fr, v[worst])) {
                p[worst] = xc;
                v[worst] = fc;
            } else {
                for (auto k = 0; k <= n; ++k) {
                    if (k == best) continue;
                    p[k] = p[best] + 0.5 * (p[k] - p[best]);
                    v[k] = f(p[k]);
                    ++evals;
                }
            }
        }
    }
    const auto it = std::min_element(v.begin(), v.end());
    NmResult r;
    r.x = p[static_cast<std::size_t>(it - v.begin())];
    r.value = *it;
    r.evaluations = evals;
    return r;
}

} // namespace tso::opt
