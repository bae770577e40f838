// expfit.hpp: sums of damped complex exponentials fitted to sampled correlation functions

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tso/core.hpp"
#include "tso/optimize.hpp"
#include "tso/spectral.hpp"

namespace tso {

// C(t) ~ sum_n weights[n] * exp(rates[n] * t)
struct ExponentialFit {
    std::vector<cplx> rates;
    std::vector<cplx> weights;
    double residual{0.0}; // discrete L2 norm of the misfit on the source grid
    double dt{0.0};
    std::size_t n_samples{0};
    std::string diagnostic;
    bool stagnated{false};

    std::size_t n_terms() const { return rates.size(); }
    cplx operator()(double t) const {
        cplx s{0.0, 0.0};
        for (std::size_t k = 0; k < rates.size(); ++k) s += weights[k] * std::exp(rates[k] * t);
        return s;
    }
    cplx weight_sum() const {
        cplx s{0.0, 0.0};
        for (const auto& w : weights) s += w;
        return s;
    }
};

inline double fit_residual(const std::vector<cplx>& rates, const std::vector<cplx>& weights, const CorrelationSeries& s) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
        cplx f{0.0, 0.0};
        const double t = s.time(j);
        for (std::size_t k = 0; k < rates.size(); ++k) f += weights[k] * std::exp(rates[k] * t);
        acc += std::norm(s.values[j] - f);
    }
    return std::sqrt(acc);
}

inline double series_norm(const CorrelationSeries& s) {
    double acc = 0.0;
    for (const auto& v : s.values) acc += std::norm(v);
    return std::sqrt(acc);
}

// Least-squares weights for fixed rates.
inline std::vector<cplx> solve_weights(const std::vector<cplx>& rates, const CorrelationSeries& s) {
    const auto m = static_cast<Eigen::Index>(s.size());
    const auto n = static_cast<Eigen::Index>(rates.size());
    Eigen::MatrixXcd A(m, n);
    Eigen::VectorXcd y(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        y[j] = s.values[static_cast<std::size_t>(j)];
        for (Eigen::Index k = 0; k < n; ++k) A(j, k) = std::exp(rates[static_cast<std::size_t>(k)] * s.time(static_cast<std::size_t>(j)));
    }
    const Eigen::VectorXcd w = A.completeOrthogonalDecomposition().solve(y);
    return {w.data(), w.data() + n};
}

namespace detail {

inline bool near_degenerate(const std::vector<cplx>& r, double rel) {
    double scale = 0.0;
    for (const auto& x : r) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = i + 1; j < r.size(); ++j)
            if (std::abs(r[i] - r[j]) < rel * scale) return true;
    return false;
}

} // namespace detail

// Hankel matrix-pencil estimate of n_terms exponentials.
inline ExponentialFit prony_fit(const CorrelationSeries& series, std::size_t n_terms) {
    if (n_terms == 0) throw ContractError("prony_fit needs at least one term");
    if (series.size() < 2 * n_terms + 1) throw ContractError("series too short for the requested number of terms");
    if (!(series.dt > 0.0)) throw ContractError("prony_fit needs a uniform grid with positive step");
    const auto n = static_cast<Eigen::Index>(series.size());
    const Eigen::Index L = n / 2;
    Eigen::MatrixXcd Y(n - L, L + 1);
    for (Eigen::Index i = 0; i < n - L; ++i)
        for (Eigen::Index j = 0; j <= L; ++j) Y(i, j) = series.values[static_cast<std::size_t>(i + j)];
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(Y, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    ExponentialFit fit;
    fit.dt = series.dt;
    fit.n_samples = series.size();
    auto K = static_cast<Eigen::Index>(n_terms);
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv[k] > 1e-13 * sv[0]) ++rank;
    if (rank < K) {
        fit.diagnostic = "rank deficient: series explained by " + std::to_string(rank) + " terms";
        K = std::max<Eigen::Index>(rank, 1);
    }
    // row space of Y is spanned by conj(V)
    const Eigen::MatrixXcd W = svd.matrixV().leftCols(K).conjugate();
    const Eigen::MatrixXcd W1 = W.topRows(L), W2 = W.bottomRows(L);
    const Eigen::MatrixXcd P = W1.completeOrthogonalDecomposition().solve(W2);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(P, false);
    const double floor_rate = -1e-6 * pi / series.dt;
    for (Eigen::Index k = 0; k < K; ++k) {
        cplx lam = std::log(es.eigenvalues()[k]) / series.dt;
        if (!(lam.real() < 0.0)) lam = cplx{floor_rate, lam.imag()};
        fit.rates.push_back(lam);
    }
    if (fit.rates.size() > 1 && detail::near_degenerate(fit.rates, 1e-6)) {
        auto reduced = prony_fit(series, fit.rates.size() - 1);
        reduced.diagnostic = "near-degenerate rates merged; " + reduced.diagnostic;
        return reduced;
    }
    std::sort(fit.rates.begin(), fit.rates.end(), [](cplx a, cplx b) {
        return a.imag() != b.imag() ? a.imag() < b.imag() : a.real() < b.real();
    });
    fit.weights = solve_weights(fit.rates, series);
    fit.residual = fit_residual(fit.rates, fit.weights, series);
    return fit;
}

// Variable projection over the rates with weights re-solved linearly.
// Decay is kept by optimizing log(-Re lambda).
inline ExponentialFit refine_fit(const ExponentialFit& fit, const CorrelationSeries& series) {
    const std::size_t N = fit.n_terms();
    auto unpack = [N](const Eigen::VectorXd& x) {
        std::vector<cplx> r(N);
        for (std::size_t k = 0; k < N; ++k) r[k] = cplx{-std::exp(x[2 * k]), x[2 * k + 1]};
        return r;
    };
    auto resid = [&](const Eigen::VectorXd& x) {
        const auto rates = unpack(x);
        const auto w = solve_weights(rates, series);
        Eigen::VectorXd r(2 * series.size());
        for (std::size_t j = 0; j < series.size(); ++j) {
            cplx f{0.0, 0.0};
            for (std::size_t k = 0; k < N; ++k) f += w[k] * std::exp(rates[k] * series.time(j));
            const cplx d = series.values[j] - f;
            r[2 * j] = d.real();
            r[2 * j + 1] = d.imag();
        }
        return r;
    };
    Eigen::VectorXd x0(2 * N);
    for (std::size_t k = 0; k < N; ++k) {
        x0[2 * k] = std::log(std::max(-fit.rates[k].real(), 1e-300));
        x0[2 * k + 1] = fit.rates[k].imag();
    }
    opt::LmOptions o;
    o.max_iterations = 300;
    const auto lm = opt::levenberg_marquardt(resid, x0, o);
    ExponentialFit out = fit;
    out.rates = unpack(lm.x);
    out.weights = solve_weights(out.rates, series);
    out.residual = fit_residual(out.rates, out.weights, series);
    const double before = fit_residual(fit.rates, fit.weights, series);
    if (!(out.residual <= before) || detail::near_degenerate(out.rates, 1e-6)) {
        ExponentialFit keep = fit;
        keep.stagnated = true;
        keep.residual = before;
        return keep;
    }
    out.stagnated = lm.iterations <= 1;
    return out;
}

// Shifts every weight by the same amount so that sum(w) == c0 (the minimal
// least-squares correction) and pushes any non-decaying rate into decay.
inline ExponentialFit enforce_constraints(const ExponentialFit& fit, double c0) {
    if (!(c0 > 0.0)) throw DomainError("C(0) must be positive");
    ExponentialFit out = fit;
    const auto N = static_cast<double>(fit.n_terms());
    const cplx delta = (cplx{c0, 0.0} - fit.weight_sum()) / N;
    for (auto& w : out.weights) w += delta;
    const double floor_rate = fit.dt > 0.0 ? -1e-6 * pi / fit.dt : -1e-12;
    for (auto& r : out.rates)
        if (!(r.real() < 0.0)) r = cplx{floor_rate, r.imag()};
    return out;
}

// Fit, polish and constrain in one call; the residual is recomputed on the series.
inline ExponentialFit fit_correlation(const CorrelationSeries& series, std::size_t n_terms) {
    auto f = refine_fit(prony_fit(series, n_terms), series);
    f = enforce_constraints(f, series.values.front().real());
    f.residual = fit_residual(f.rates, f.weights, series);
    return f;
}

} // namespace tso
