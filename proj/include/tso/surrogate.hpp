// surrogate.hpp: damped oscillator chains reproducing a bath correlation function

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tso/core.hpp"
#include "tso/expfit.hpp"
#include "tso/optimize.hpp"
#include "tso/parallel.hpp"
#include "tso/quadrature.hpp"
#include "tso/spectral.hpp"

namespace tso {

// Chain of N damped oscillators. Mode n couples to n+1 with strength g[n];
// the bath coupling operator is sum_n (c_n b_n + conj(c_n) b_n^dag).
struct SurrogateBath {
    std::vector<double> omega;
    std::vector<double> g;     // N-1 entries
    std::vector<double> gamma;
    std::vector<cplx> c;       // c.back() real
    std::vector<int> dims;     // truncation hint per mode, may be empty
    Unit unit{Unit::omega_c};

    std::size_t n_modes() const { return omega.size(); }
};

inline void validate(const SurrogateBath& b) {
    const std::size_t N = b.n_modes();
    if (N == 0) throw DomainError("surrogate bath has no modes");
    if (b.gamma.size() != N || b.c.size() != N || b.g.size() + 1 != N)
        throw DomainError("surrogate bath arrays have inconsistent lengths");
    if (!b.dims.empty() && b.dims.size() != N) throw DomainError("surrogate bath dims length mismatch");
    for (double x : b.gamma)
        if (!(x > 0.0)) throw DomainError("surrogate rates must be positive");
    for (double x : b.g)
        if (!(x >= 0.0)) throw DomainError("surrogate couplings must be nonnegative");
    if (b.c.back().imag() != 0.0) throw DomainError("last coupling coefficient must be real");
    for (int d : b.dims)
        if (d < 2) throw DomainError("local dimension must be at least 2");
}

// Expresses a cm^-1 or 100 cm^-1 bath in the other of the two units.
inline SurrogateBath convert_unit(const SurrogateBath& b, Unit to) {
    auto factor = [](Unit u) {
        if (u == Unit::cm1) return 1.0;
        if (u == Unit::cm1_x100) return 100.0;
        throw DomainError("natural units cannot be converted to wavenumbers");
    };
    if (b.unit == to) return b;
    const double f = factor(b.unit) / factor(to);
    SurrogateBath o = b;
    o.unit = to;
    for (auto& x : o.omega) x *= f;
    for (auto& x : o.g) x *= f;
    for (auto& x : o.gamma) x *= f;
    for (auto& x : o.c) x *= f;
    return o;
}

struct DynamicalMatrix {
    Eigen::MatrixXcd M;
    Eigen::VectorXcd lambda;
    Eigen::MatrixXcd U; // right eigenvectors in columns
    Eigen::MatrixXcd V; // V^T U = I
    double biorthogonality_residual{0.0};
};

inline Eigen::MatrixXcd chain_matrix(const std::vector<cplx>& alpha, const std::vector<double>& g) {
    const auto N = static_cast<Eigen::Index>(alpha.size());
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(N, N);
    for (Eigen::Index n = 0; n < N; ++n) M(n, n) = alpha[static_cast<std::size_t>(n)];
    for (Eigen::Index n = 0; n + 1 < N; ++n) {
        M(n, n + 1) = -I * g[static_cast<std::size_t>(n)];
        M(n + 1, n) = -I * g[static_cast<std::size_t>(n)];
    }
    return M;
}

inline std::vector<cplx> bath_alpha(const SurrogateBath& b) {
    std::vector<cplx> a(b.n_modes());
    for (std::size_t n = 0; n < a.size(); ++n) a[n] = cplx{-0.5 * b.gamma[n], -b.omega[n]};
    return a;
}

inline DynamicalMatrix dynamical_matrix(const std::vector<cplx>& alpha, const std::vector<double>& g) {
    DynamicalMatrix d;
    d.M = chain_matrix(alpha, g);
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(d.M);
    if (es.info() != Eigen::Success) throw NumericError("eigensolver failed on dynamical matrix");
    const auto N = d.M.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), 0);
    const auto& ev = es.eigenvalues();
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return ev[a].imag() != ev[b].imag() ? ev[a].imag() < ev[b].imag() : ev[a].real() < ev[b].real();
    });
    d.lambda.resize(N);
    d.U.resize(N, N);
    for (Eigen::Index k = 0; k < N; ++k) {
        d.lambda[k] = ev[order[static_cast<std::size_t>(k)]];
        d.U.col(k) = es.eigenvectors().col(order[static_cast<std::size_t>(k)]);
    }
    const double scale = d.M.norm();
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = i + 1; j < N; ++j)
            if (std::abs(d.lambda[i] - d.lambda[j]) < 1e-10 * scale)
                throw NumericError("degenerate dynamical matrix spectrum", std::abs(d.lambda[i] - d.lambda[j]));
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(d.U);
    d.V = lu.inverse().transpose();
    d.biorthogonality_residual = (d.V.transpose() * d.U - Eigen::MatrixXcd::Identity(N, N)).norm();
    // near an exceptional point the eigenvectors coalesce before the gap closes
    if (!(d.biorthogonality_residual < 1e-10))
        throw NumericError("dynamical matrix is close to defective", d.biorthogonality_residual);
    return d;
}

inline DynamicalMatrix dynamical_matrix(const SurrogateBath& b) {
    validate(b);
    return dynamical_matrix(bath_alpha(b), b.g);
}

// w_n = (sum_l c_l u^n_l) (sum_m v^n_m conj(c_m))
inline std::vector<cplx> mode_weights(const DynamicalMatrix& d, const std::vector<cplx>& c) {
    const auto N = d.lambda.size();
    std::vector<cplx> w(static_cast<std::size_t>(N));
    for (Eigen::Index n = 0; n < N; ++n) {
        cplx a{0.0, 0.0}, b{0.0, 0.0};
        for (Eigen::Index l = 0; l < N; ++l) {
            a += c[static_cast<std::size_t>(l)] * d.U(l, n);
            b += d.V(l, n) * std::conj(c[static_cast<std::size_t>(l)]);
        }
        w[static_cast<std::size_t>(n)] = a * b;
    }
    return w;
}

// The bath correlation as a sum of exponentials (rates lambda_n, weights w_n).
inline ExponentialFit surrogate_exponentials(const SurrogateBath& b) {
    const auto d = dynamical_matrix(b);
    ExponentialFit f;
    f.rates.assign(d.lambda.data(), d.lambda.data() + d.lambda.size());
    f.weights = mode_weights(d, b.c);
    return f;
}

inline cplx correlation_from_params(const SurrogateBath& b, double t) {
    if (t < 0.0) throw DomainError("negative time; use the conjugate");
    return surrogate_exponentials(b)(t);
}

inline double correlation_fourier_from_terms(const ExponentialFit& f, double w) {
    double s = 0.0;
    for (std::size_t n = 0; n < f.n_terms(); ++n) {
        const cplx l = f.rates[n], c = f.weights[n];
        const double x = w + l.imag();
        s += (c.real() * l.real() + c.imag() * x) / (l.real() * l.real() + x * x);
    }
    return -2.0 * s;
}

inline double correlation_fourier_from_params(const SurrogateBath& b, double w) {
    return correlation_fourier_from_terms(surrogate_exponentials(b), w);
}

// ---------------------------------------------------------------------------
// inverse eigenvalue problem

namespace detail {

using Poly = std::vector<cplx>; // coefficients, lowest order first

inline Poly poly_from_roots(const std::vector<cplx>& roots) {
    Poly p{1.0};
    for (const auto& r : roots) {
        Poly q(p.size() + 1, 0.0);
        for (std::size_t k = 0; k < p.size(); ++k) {
            q[k + 1] += p[k];
            q[k] -= r * p[k];
        }
        p = std::move(q);
    }
    return p;
}

// Characteristic polynomial of the chain matrix and its derivatives in alpha_j.
// p_k = (x - a_k) p_{k-1} + g_{k-1}^2 p_{k-2}
inline void chain_charpoly(const std::vector<cplx>& a, const std::vector<double>& g, Poly& p,
                           std::vector<Poly>* dp) {
    const std::size_t N = a.size();
    Poly pm2{1.0}, pm1;
    std::vector<Poly> dm2(N, Poly{0.0}), dm1(N);
    auto mul_x_minus = [](const Poly& q, cplx r) {
        Poly o(q.size() + 1, 0.0);
        for (std::size_t k = 0; k < q.size(); ++k) {
            o[k + 1] += q[k];
            o[k] -= r * q[k];
        }
        return o;
    };
    auto add_scaled = [](Poly& o, const Poly& q, double s) {
        if (o.size() < q.size()) o.resize(q.size(), 0.0);
        for (std::size_t k = 0; k < q.size(); ++k) o[k] += s * q[k];
    };
    pm1 = mul_x_minus(pm2, a[0]);
    for (std::size_t j = 0; j < N; ++j) dm1[j] = Poly{j == 0 ? cplx{-1.0} : cplx{0.0}};
    for (std::size_t k = 1; k < N; ++k) {
        const double g2 = g[k - 1] * g[k - 1];
        Poly pk = mul_x_minus(pm1, a[k]);
        add_scaled(pk, pm2, g2);
        if (dp) {
            std::vector<Poly> dk(N);
            for (std::size_t j = 0; j < N; ++j) {
                dk[j] = mul_x_minus(dm1[j], a[k]);
                add_scaled(dk[j], dm2[j], g2);
                if (j == k) add_scaled(dk[j], pm1, -1.0);
            }
            dm2 = std::move(dm1);
            dm1 = std::move(dk);
        }
        pm2 = std::move(pm1);
        pm1 = std::move(pk);
    }
    p = pm1;
    if (dp) *dp = dm1;
}

} // namespace detail

struct AlphaCandidate {
    std::vector<cplx> alpha;
    bool physical{false}; // all Re alpha < 0
    double residual{0.0};
};

// Damped Newton on charpoly(M(alpha; g)) == prod(x - target_n), from one start.
inline std::optional<AlphaCandidate> newton_inverse(const std::vector<double>& g, const std::vector<cplx>& target,
                                                    std::vector<cplx> a, int max_iter = 100) {
    const std::size_t N = target.size();
    const detail::Poly want = detail::poly_from_roots(target);
    double lam_max = 0.0;
    for (const auto& t : target) lam_max = std::max(lam_max, std::abs(t));
    const double accept = 1e-10 * (1.0 + std::pow(lam_max, static_cast<double>(N)));
    auto resid = [&](const std::vector<cplx>& x, std::vector<detail::Poly>* dp, Eigen::VectorXcd& r) {
        detail::Poly p;
        detail::chain_charpoly(x, g, p, dp);
        r.resize(static_cast<Eigen::Index>(N));
        for (std::size_t k = 0; k < N; ++k) r[static_cast<Eigen::Index>(k)] = p[k] - want[k];
        return r.lpNorm<Eigen::Infinity>();
    };
    Eigen::VectorXcd r;
    std::vector<detail::Poly> dp;
    double nr = resid(a, &dp, r);
    for (int it = 0; it < max_iter && nr >= accept; ++it) {
        Eigen::MatrixXcd J(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j)
                J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = i < dp[j].size() ? dp[j][i] : cplx{0.0};
        const Eigen::VectorXcd step = J.fullPivLu().solve(-r);
        if (!step.allFinite()) return std::nullopt;
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 40; ++h, t *= 0.5) {
            std::vector<cplx> trial = a;
            for (std::size_t k = 0; k < N; ++k) trial[k] += t * step[static_cast<Eigen::Index>(k)];
            Eigen::VectorXcd rt;
            const double nt = resid(trial, nullptr, rt);
            if (std::isfinite(nt) && nt < nr) {
                a = std::move(trial);
                moved = true;
                break;
            }
        }
        if (!moved) break;
        nr = resid(a, &dp, r);
    }
    if (!(nr < accept)) return std::nullopt;
    AlphaCandidate c;
    c.alpha = a;
    c.residual = nr;
    c.physical = std::all_of(a.begin(), a.end(), [](cplx x) { return x.real() < 0.0; });
    return c;
}

// Multistart Newton; returns distinct solutions for the diagonal alpha given
// couplings g and target eigenvalues.
inline std::vector<AlphaCandidate> solve_inverse_eigenvalue(const std::vector<double>& g,
                                                            const std::vector<cplx>& target, int n_starts,
                                                            std::uint64_t seed) {
    const std::size_t N = target.size();
    if (g.size() + 1 != N) throw ContractError("need N-1 couplings for N target eigenvalues");
    for (double x : g)
        if (!(x > 0.0)) throw DomainError("couplings must be positive");
    std::vector<AlphaCandidate> found;
    if (N == 1) {
        AlphaCandidate c;
        c.alpha = {target[0]};
        c.physical = target[0].real() < 0.0;
        found.push_back(c);
        return found;
    }
    double re_min = 0.0, im_abs = 0.0, gsum = 0.0;
    for (const auto& t : target) {
        re_min = std::min(re_min, t.real());
        im_abs = std::max(im_abs, std::abs(t.imag()));
    }
    for (double x : g) gsum = std::max(gsum, x);
    const double re_span = 1.5 * std::abs(re_min) + 1e-12, im_span = im_abs + 1.5 * gsum;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double lam_max = 0.0;
    for (const auto& t : target) lam_max = std::max(lam_max, std::abs(t));
    const double dedup = 1e-8 * (1.0 + lam_max);
    for (int s = 0; s < n_starts; ++s) {
        std::vector<cplx> a0(N);
        for (auto& x : a0) x = cplx{-re_span * u(rng), im_span * (2.0 * u(rng) - 1.0)};
        auto c = newton_inverse(g, target, a0);
        if (!c) continue;
        bool dup = false;
        for (const auto& f : found) {
            double d = 0.0;
            for (std::size_t k = 0; k < N; ++k) d = std::max(d, std::abs(f.alpha[k] - c->alpha[k]));
            if (d < dedup) {
                dup = true;
                break;
            }
        }
        if (!dup) found.push_back(*c);
    }
    std::sort(found.begin(), found.end(), [](const AlphaCandidate& x, const AlphaCandidate& y) {
        for (std::size_t k = 0; k < x.alpha.size(); ++k) {
            if (x.alpha[k].real() != y.alpha[k].real()) return x.alpha[k].real() < y.alpha[k].real();
            if (x.alpha[k].imag() != y.alpha[k].imag()) return x.alpha[k].imag() < y.alpha[k].imag();
        }
        return false;
    });
    return found;
}

// Reorders (rates, weights) so that rates[k] is the target closest to lambda[k].
inline std::vector<cplx> align_weights(const Eigen::VectorXcd& lambda, const std::vector<cplx>& rates,
                                       const std::vector<cplx>& weights) {
    const std::size_t N = rates.size();
    std::vector<std::size_t> perm(N), best;
    std::iota(perm.begin(), perm.end(), 0);
    double best_cost = std::numeric_limits<double>::infinity();
    if (N <= 7) {
        do {
            double cost = 0.0;
            for (std::size_t k = 0; k < N; ++k) cost += std::abs(lambda[static_cast<Eigen::Index>(k)] - rates[perm[k]]);
            if (cost < best_cost) {
                best_cost = cost;
                best = perm;
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
    } else {
        std::vector<bool> used(N, false);
        best.resize(N);
        for (std::size_t k = 0; k < N; ++k) {
            double m = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < N; ++j)
                if (!used[j] && std::abs(lambda[static_cast<Eigen::Index>(k)] - rates[j]) < m) {
                    m = std::abs(lambda[static_cast<Eigen::Index>(k)] - rates[j]);
                    best[k] = j;
                }
            used[best[k]] = true;
        }
    }
    std::vector<cplx> out(N);
    for (std::size_t k = 0; k < N; ++k) out[k] = weights[best[k]];
    return out;
}

// ---------------------------------------------------------------------------
// weight matching

struct WeightMatch {
    std::vector<cplx> c;
    double distance{std::numeric_limits<double>::infinity()}; // sum_n |w_n - target_n|
};

namespace detail {

inline std::vector<cplx> unpack_c(const Eigen::VectorXd& x, std::size_t N) {
    std::vector<cplx> c(N);
    for (std::size_t l = 0; l + 1 < N; ++l) c[l] = cplx{x[static_cast<Eigen::Index>(2 * l)], x[static_cast<Eigen::Index>(2 * l + 1)]};
    c[N - 1] = cplx{x[static_cast<Eigen::Index>(2 * N - 2)], 0.0};
    return c;
}

inline Eigen::VectorXd pack_c(const std::vector<cplx>& c) {
    const std::size_t N = c.size();
    Eigen::VectorXd x(static_cast<Eigen::Index>(2 * N - 1));
    for (std::size_t l = 0; l + 1 < N; ++l) {
        x[static_cast<Eigen::Index>(2 * l)] = c[l].real();
        x[static_cast<Eigen::Index>(2 * l + 1)] = c[l].imag();
    }
    x[static_cast<Eigen::Index>(2 * N - 2)] = c[N - 1].real();
    return x;
}

inline double manhattan(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
    return s;
}

} // namespace detail

// Least squares on sum |dw|^2 followed by a simplex polish of sum |dw|.
inline WeightMatch match_weights_from(const DynamicalMatrix& dyn, const std::vector<cplx>& target,
                                      const std::vector<cplx>& c0, int simplex_evals = 3000) {
    const std::size_t N = target.size();
    auto resid = [&](const Eigen::VectorXd& x) {
        const auto w = mode_weights(dyn, detail::unpack_c(x, N));
        Eigen::VectorXd r(static_cast<Eigen::Index>(2 * N));
        for (std::size_t k = 0; k < N; ++k) {
            r[static_cast<Eigen::Index>(2 * k)] = (w[k] - target[k]).real();
            r[static_cast<Eigen::Index>(2 * k + 1)] = (w[k] - target[k]).imag();
        }
        return r;
    };
    opt::LmOptions lo;
    lo.max_iterations = 150;
    const auto lm = opt::levenberg_marquardt(resid, detail::pack_c(c0), lo);
    WeightMatch m;
    m.c = detail::unpack_c(lm.x, N);
    m.distance = detail::manhattan(mode_weights(dyn, m.c), target);
    if (simplex_evals > 0 && m.distance > 0.0) {
        auto l1 = [&](const Eigen::VectorXd& x) { return detail::manhattan(mode_weights(dyn, detail::unpack_c(x, N)), target); };
        double scale = 0.0;
        for (const auto& t : target) scale += std::abs(t);
        Eigen::VectorXd step = Eigen::VectorXd::Constant(lm.x.size(), 1e-3 * std::sqrt(scale / static_cast<double>(N)));
        opt::NmOptions no;
        no.max_evaluations = simplex_evals;
        const auto nm = opt::nelder_mead(l1, lm.x, step, no);
        if (nm.value < m.distance) {
            m.c = detail::unpack_c(nm.x, N);
            m.distance = nm.value;
        }
    }
    return m;
}

inline WeightMatch match_weights(const DynamicalMatrix& dyn, const std::vector<cplx>& target, int n_starts,
                                 std::uint64_t seed, int simplex_evals = 3000) {
    const std::size_t N = target.size();
    if (static_cast<std::size_t>(dyn.lambda.size()) != N) throw ContractError("weight count does not match dynamical matrix");
    cplx sum{0.0, 0.0};
    for (const auto& t : target) sum += t;
    if (N == 1) {
        WeightMatch m;
        const double s = std::max(sum.real(), 0.0);
        m.c = {cplx{std::sqrt(s), 0.0}};
        m.distance = std::abs(s - target[0]);
        return m;
    }
    const double scale = std::sqrt(std::max(std::abs(sum), 1e-300) / static_cast<double>(N));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    WeightMatch best;
    Eigen::VectorXd best_x;
    for (int s = 0; s < std::max(1, n_starts); ++s) {
        std::vector<cplx> c0(N);
        for (std::size_t l = 0; l + 1 < N; ++l) c0[l] = scale * cplx{nd(rng), nd(rng)};
        c0[N - 1] = cplx{scale * std::abs(nd(rng)), 0.0};
        const auto m = match_weights_from(dyn, target, c0, 0);
        if (m.distance < best.distance) best = m;
    }
    if (simplex_evals > 0) {
        const auto polished = match_weights_from(dyn, target, best.c, simplex_evals);
        if (polished.distance < best.distance) best = polished;
    }
    return best;
}

// ---------------------------------------------------------------------------
// figures of merit

// I1 = int_0^tmax (tmax - tau) |C_R(tau) - C_E(tau)| dtau
inline double merit_i1(const ExponentialFit& surrogate, const std::function<cplx(double)>& target, double t_max) {
    if (!(t_max > 0.0)) throw DomainError("t_max must be positive");
    auto f = [&](double tau) { return (t_max - tau) * std::abs(surrogate(tau) - target(tau)); };
    return quad::integrate(f, 0.0, t_max, 1e-14, 1e-9, 20000).value;
}

// I2 = dt * sum_{n=1}^{Nmax} |dC(n dt)| over the grid points after t = 0
inline double merit_i2(const ExponentialFit& surrogate, const CorrelationSeries& target) {
    double s = 0.0;
    for (std::size_t k = 1; k < target.size(); ++k) s += std::abs(surrogate(target.time(k)) - target.values[k]);
    return target.dt * s;
}

inline double merit_i1(const SurrogateBath& b, const std::function<cplx(double)>& target, double t_max) {
    return merit_i1(surrogate_exponentials(b), target, t_max);
}

inline double merit_i2(const SurrogateBath& b, const CorrelationSeries& target) {
    return merit_i2(surrogate_exponentials(b), target);
}

// Samples C on t_n = n * t_max / n_max, n = 0..n_max.
inline CorrelationSeries merit_grid(const BathSpec& spec, double t_max, std::size_t n_max) {
    return sample_correlation(spec, t_max, n_max + 1);
}

enum class Merit { I1, I2 };

// ---------------------------------------------------------------------------
// stochastic search

struct TsoConfig {
    double g_max{0.0};          // 0: five times the largest |Im rate|
    int samples{512};
    int newton_starts{64};
    int weight_starts{8};
    std::uint64_t seed{1};
    Merit merit{Merit::I2};
    int keep{10};
    int refine{3};              // leading results refined on the merit over all parameters
    int refine_evals{20000};
    bool project_unphysical{true}; // seed from clipped candidates when no physical one exists
    int projected_seeds{32};
    int threads{0};
};

struct TsoTarget {
    ExponentialFit fit;
    CorrelationSeries grid;               // I2 grid
    std::function<cplx(double)> exact;    // I1 target
    double t_max{0.0};
};

struct RankedBath {
    SurrogateBath bath;
    double merit{0.0};
    double distance{0.0};
    std::size_t sample{0};
    std::vector<cplx> alpha;
    bool refined{false};
    bool projected{false};
};

struct TsoDiagnostics {
    std::size_t samples{0};
    std::size_t with_solution{0};
    std::size_t with_physical{0};
    double best_unphysical_gamma{-std::numeric_limits<double>::infinity()}; // max over candidates of min Gamma
    double best_merit{std::numeric_limits<double>::infinity()};
    double search_merit{std::numeric_limits<double>::infinity()}; // before refinement
    bool refined{false};
    bool projected{false};
};

struct TsoResult {
    std::vector<RankedBath> baths;
    TsoDiagnostics diagnostics;
    double g_max{0.0};
};

namespace detail {

inline SurrogateBath bath_from(const std::vector<cplx>& alpha, const std::vector<double>& g, const std::vector<cplx>& c,
                               Unit unit) {
    SurrogateBath b;
    b.unit = unit;
    b.g = g;
    b.c = c;
    for (const auto& a : alpha) {
        b.omega.push_back(-a.imag());
        b.gamma.push_back(-2.0 * a.real());
    }
    return b;
}

inline double evaluate_merit(const SurrogateBath& b, const TsoTarget& t, Merit m) {
    try {
        const auto terms = surrogate_exponentials(b);
        if (m == Merit::I1) return merit_i1(terms, t.exact, t.t_max);
        return merit_i2(terms, t.grid);
    } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
    } catch (const DomainError&) {
        return std::numeric_limits<double>::infinity();
    }
}

// Unconstrained coordinates: Omega, log Gamma, logit(g / g_max), Re c, Im c (last real).
struct BathCoordinates {
    std::size_t N;
    double g_max;
    Unit unit;

    Eigen::VectorXd pack(const SurrogateBath& b) const {
        Eigen::VectorXd x(static_cast<Eigen::Index>(5 * N - 2));
        Eigen::Index i = 0;
        for (double o : b.omega) x[i++] = o;
        for (double G : b.gamma) x[i++] = std::log(G);
        for (double g : b.g) {
            const double u = std::clamp(g / g_max, 1e-12, 1.0 - 1e-12);
            x[i++] = std::log(u / (1.0 - u));
        }
        for (std::size_t n = 0; n < N; ++n) {
            x[i++] = b.c[n].real();
            if (n + 1 < N) x[i++] = b.c[n].imag();
        }
        return x;
    }
    SurrogateBath unpack(const Eigen::VectorXd& x) const {
        SurrogateBath b;
        b.unit = unit;
        Eigen::Index i = 0;
        for (std::size_t n = 0; n < N; ++n) b.omega.push_back(x[i++]);
        for (std::size_t n = 0; n < N; ++n) b.gamma.push_back(std::exp(x[i++]));
        for (std::size_t n = 0; n + 1 < N; ++n) b.g.push_back(g_max / (1.0 + std::exp(-x[i++])));
        for (std::size_t n = 0; n < N; ++n) {
            const double re = x[i++];
            b.c.push_back(cplx{re, n + 1 < N ? x[i++] : 0.0});
        }
        return b;
    }
};

// Points where the target is compared during least-squares refinement.
inline CorrelationSeries refinement_grid(const TsoTarget& t, Merit m) {
    if (m == Merit::I2) return t.grid;
    CorrelationSeries s;
    const std::size_t n = 512;
    s.dt = t.t_max / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) s.values.push_back(t.exact(s.time(k)));
    return s;
}

} // namespace detail

// Lowers the merit of a bath by least squares on the sampled misfit followed by
// a simplex search on the merit itself. Every iterate is a physical chain with
// couplings in (0, g_max); the eigenvalues are no longer tied to the fit.
inline RankedBath refine_bath(const RankedBath& seed, const TsoTarget& target, Merit merit, double g_max, int max_evals) {
    const std::size_t N = seed.bath.n_modes();
    RankedBath best = seed;
    if (N < 2 || max_evals <= 0) return best;
    const detail::BathCoordinates coords{N, g_max, seed.bath.unit};
    const auto grid = detail::refinement_grid(target, merit);
    auto resid = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(2 * grid.size()));
        try {
            const auto f = surrogate_exponentials(coords.unpack(x));
            const double w = std::sqrt(grid.dt);
            for (std::size_t k = 0; k < grid.size(); ++k) {
                const cplx d = f(grid.time(k)) - grid.values[k];
                r[static_cast<Eigen::Index>(2 * k)] = w * d.real();
                r[static_cast<Eigen::Index>(2 * k + 1)] = w * d.imag();
            }
        } catch (const NumericError&) {
            r.setConstant(std::numeric_limits<double>::infinity());
        } catch (const DomainError&) {
            r.setConstant(std::numeric_limits<double>::infinity());
        }
        return r;
    };
    auto value = [&](const Eigen::VectorXd& x) {
        const auto b = coords.unpack(x);
        for (double G : b.gamma)
            if (!(G > 0.0) || !std::isfinite(G)) return std::numeric_limits<double>::infinity();
        for (double g : b.g)
            if (!(g > 0.0 && g < g_max)) return std::numeric_limits<double>::infinity();
        return detail::evaluate_merit(b, target, merit);
    };
    auto consider = [&](const Eigen::VectorXd& x) {
        const double v = value(x);
        if (v < best.merit) {
            best.bath = coords.unpack(x);
            best.bath.dims = seed.bath.dims;
            best.merit = v;
            best.refined = true;
            const auto d = dynamical_matrix(best.bath);
            best.alpha.assign(d.M.diagonal().data(), d.M.diagonal().data() + N);
        }
    };
    opt::LmOptions lo;
    lo.max_iterations = 300;
    const auto lm = opt::levenberg_marquardt(resid, coords.pack(seed.bath), lo);
    consider(lm.x);
    opt::NmOptions no;
    no.max_evaluations = max_evals;
    no.ftol = 1e-12;
    no.xtol = 1e-10;
    const auto nm = opt::nelder_mead(value, coords.pack(best.bath), Eigen::VectorXd::Constant(lm.x.size(), 0.05), no);
    consider(nm.x);
    return best;
}

inline TsoResult run_tso(const TsoTarget& target, std::size_t n_modes, const TsoConfig& cfg, Unit unit = Unit::omega_c) {
    const auto& fit = target.fit;
    if (fit.n_terms() != n_modes) throw ContractError("fit must have n_modes terms");
    if (cfg.merit == Merit::I1 && !target.exact) throw ContractError("I1 needs an analytic target");
    if (cfg.merit == Merit::I2 && target.grid.size() < 2) throw ContractError("I2 needs a sampled target");
    TsoResult res;
    double im_max = 0.0, re_max = 0.0;
    for (const auto& r : fit.rates) {
        im_max = std::max(im_max, std::abs(r.imag()));
        re_max = std::max(re_max, std::abs(r.real()));
    }
    res.g_max = cfg.g_max > 0.0 ? cfg.g_max : 5.0 * im_max;
    if (n_modes > 1 && !(res.g_max > 0.0)) throw DomainError("g_max must be positive");
    const std::size_t S = n_modes == 1 ? 1 : static_cast<std::size_t>(std::max(cfg.samples, 1));
    const unsigned threads = resolve_threads(cfg.threads);

    struct Unphysical {
        double min_gamma;
        std::size_t sample, index;
        std::vector<cplx> alpha;
        std::vector<double> g;
    };
    struct Slot {
        std::vector<RankedBath> found;
        std::vector<Unphysical> rejected;
        bool any{false};
    };
    std::vector<Slot> slots(S);
    auto score = [&](const std::vector<cplx>& alpha, const std::vector<double>& g, std::size_t i, std::uint64_t wseed,
                     RankedBath& out) {
        DynamicalMatrix dyn;
        try {
            dyn = dynamical_matrix(alpha, g);
        } catch (const NumericError&) {
            return false;
        }
        const auto wt = align_weights(dyn.lambda, fit.rates, fit.weights);
        const auto m = match_weights(dyn, wt, cfg.weight_starts, wseed);
        out.bath = detail::bath_from(alpha, g, m.c, unit);
        out.distance = m.distance;
        out.merit = detail::evaluate_merit(out.bath, target, cfg.merit);
        out.sample = i;
        out.alpha = alpha;
        return std::isfinite(out.merit);
    };
    parallel_for(S, threads, [&](std::size_t i) {
        std::mt19937_64 rng(stream_seed(cfg.seed, 3 * i));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> g(n_modes - 1);
        for (auto& x : g) {
            do x = res.g_max * u(rng);
            while (!(x > 0.0));
        }
        const auto cands = solve_inverse_eigenvalue(g, fit.rates, cfg.newton_starts, stream_seed(cfg.seed, 3 * i + 1));
        Slot& slot = slots[i];
        slot.any = !cands.empty();
        for (std::size_t k = 0; k < cands.size(); ++k) {
            const auto& cand = cands[k];
            if (!cand.physical) {
                double mg = std::numeric_limits<double>::infinity();
                for (const auto& a : cand.alpha) mg = std::min(mg, -2.0 * a.real());
                slot.rejected.push_back({mg, i, k, cand.alpha, g});
                continue;
            }
            RankedBath rb;
            if (score(cand.alpha, g, i, stream_seed(cfg.seed, 3 * i + 2) + k, rb)) slot.found.push_back(std::move(rb));
        }
    });
    std::vector<RankedBath> all;
    std::vector<Unphysical> rejected;
    res.diagnostics.samples = S;
    for (auto& s : slots) {
        if (s.any) ++res.diagnostics.with_solution;
        if (!s.found.empty()) ++res.diagnostics.with_physical;
        for (auto& r : s.found) all.push_back(std::move(r));
        for (auto& r : s.rejected) {
            res.diagnostics.best_unphysical_gamma = std::max(res.diagnostics.best_unphysical_gamma, r.min_gamma);
            rejected.push_back(std::move(r));
        }
    }
    auto by_merit = [](const RankedBath& a, const RankedBath& b) {
        return a.merit != b.merit ? a.merit < b.merit : a.sample < b.sample;
    };

    // no physical solution: clip the rates of the least unphysical candidates
    if (all.empty() && cfg.project_unphysical && !rejected.empty()) {
        std::stable_sort(rejected.begin(), rejected.end(), [](const Unphysical& a, const Unphysical& b) {
            return a.min_gamma != b.min_gamma ? a.min_gamma > b.min_gamma : a.sample < b.sample;
        });
        rejected.resize(std::min<std::size_t>(rejected.size(), static_cast<std::size_t>(std::max(cfg.projected_seeds, 0))));
        const double floor_re = -1e-2 * std::max(re_max, 1e-300);
        std::vector<RankedBath> proj(rejected.size());
        std::vector<char> ok(rejected.size(), 0);
        parallel_for(rejected.size(), threads, [&](std::size_t j) {
            auto alpha = rejected[j].alpha;
            for (auto& a : alpha)
                if (!(a.real() < floor_re)) a = cplx{floor_re, a.imag()};
            ok[j] = score(alpha, rejected[j].g, rejected[j].sample, stream_seed(cfg.seed, 3 * rejected[j].sample + 2) + rejected[j].index,
                          proj[j]);
            proj[j].projected = true;
        });
        for (std::size_t j = 0; j < proj.size(); ++j)
            if (ok[j]) all.push_back(std::move(proj[j]));
        res.diagnostics.projected = !all.empty();
    }
    std::stable_sort(all.begin(), all.end(), by_merit);
    if (!all.empty()) res.diagnostics.search_merit = all.front().merit;

    const std::size_t R = n_modes > 1 ? std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.refine, 0)), all.size()) : 0;
    std::vector<RankedBath> refined(R);
    parallel_for(R, threads, [&](std::size_t p) { refined[p] = refine_bath(all[p], target, cfg.merit, res.g_max, cfg.refine_evals); });
    for (std::size_t p = 0; p < R; ++p) {
        if (refined[p].refined) {
            res.diagnostics.refined = true;
            all.push_back(refined[p]);
        }
    }
    std::stable_sort(all.begin(), all.end(), by_merit);
    if (static_cast<int>(all.size()) > cfg.keep) all.resize(static_cast<std::size_t>(std::max(cfg.keep, 0)));
    res.baths = std::move(all);
    if (!res.baths.empty()) res.diagnostics.best_merit = res.baths.front().merit;
    return res;
}

// ---------------------------------------------------------------------------
// closed-form solutions for N <= 3

struct ExactSolution {
    std::optional<SurrogateBath> bath;
    std::string reason; // violated constraint when infeasible
};

namespace detail {

inline bool feasible_real(cplx z, double scale, double tol, std::string& why, const char* name) {
    if (std::abs(z.imag()) > tol * scale) {
        why = std::string(name) + " has nonzero imaginary part";
        return false;
    }
    if (!(z.real() > 0.0)) {
        why = std::string(name) + " is not positive";
        return false;
    }
    return true;
}

inline void check_target(const ExponentialFit& t, std::size_t N) {
    if (t.n_terms() != N) throw ContractError("target has the wrong number of terms");
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j)
            if (t.rates[i] == t.rates[j]) throw ContractError("target rates must be distinct");
}

} // namespace detail

// Single mode: C = w exp(lambda t) with w > 0 real.
inline ExactSolution exact_one_mode(const ExponentialFit& t, double tol = 1e-10) {
    detail::check_target(t, 1);
    ExactSolution s;
    if (!detail::feasible_real(t.weights[0], std::abs(t.weights[0]), tol, s.reason, "weight")) return s;
    if (!(t.rates[0].real() < 0.0)) {
        s.reason = "rate does not decay";
        return s;
    }
    s.bath = detail::bath_from({t.rates[0]}, {}, {cplx{std::sqrt(t.weights[0].real()), 0.0}}, Unit::omega_c);
    return s;
}

// N = 2 with c_2 = 0.
inline ExactSolution exact_two_mode(const ExponentialFit& t, double tol = 1e-10) {
    detail::check_target(t, 2);
    ExactSolution s;
    const cplx l1 = t.rates[0], l2 = t.rates[1], w1 = t.weights[0], w2 = t.weights[1];
    const cplx sum = w1 + w2;
    const double wscale = std::abs(w1) + std::abs(w2);
    if (!detail::feasible_real(sum, wscale, tol, s.reason, "sum of weights")) return s;
    const cplx a1 = (w1 * l1 + w2 * l2) / sum;
    const cplx a2 = (w1 * l2 + w2 * l1) / sum;
    const cplx h = 0.5 * (l1 - l2);
    const cplx r = (w1 - w2) / sum;
    const cplx g2 = h * h * (r * r - 1.0);
    if (!detail::feasible_real(g2, std::norm(l1) + std::norm(l2), tol, s.reason, "g^2")) return s;
    if (!(a1.real() < 0.0 && a2.real() < 0.0)) {
        s.reason = "Gamma not positive";
        return s;
    }
    s.bath = detail::bath_from({a1, a2}, {std::sqrt(g2.real())}, {cplx{std::sqrt(sum.real()), 0.0}, 0.0}, Unit::omega_c);
    return s;
}

// N = 3 with c_2 = c_3 = 0: explicit inversion, overdetermined by two real constraints.
inline ExactSolution exact_three_mode_sparse(const ExponentialFit& t, double tol = 1e-9) {
    detail::check_target(t, 3);
    ExactSolution s;
    const auto& l = t.rates;
    const auto& w = t.weights;
    const cplx sum = w[0] + w[1] + w[2];
    double wscale = 0.0, lscale = 0.0;
    for (int k = 0; k < 3; ++k) {
        wscale += std::abs(w[k]);
        lscale = std::max(lscale, std::abs(l[k]));
    }
    if (!detail::feasible_real(sum, wscale, tol, s.reason, "sum of weights")) return s;
    const cplx d23 = (l[1] - l[2]) * (l[1] - l[2]);
    const cplx d31 = (l[2] - l[0]) * (l[2] - l[0]);
    const cplx d12 = (l[0] - l[1]) * (l[0] - l[1]);
    const cplx Q = w[1] * w[2] * d23 + w[2] * w[0] * d31 + w[0] * w[1] * d12;
    const cplx P = w[1] * w[2] * d23 * l[0] + w[2] * w[0] * d31 * l[1] + w[0] * w[1] * d12 * l[2];
    const cplx a1 = (w[0] * l[0] + w[1] * l[1] + w[2] * l[2]) / sum;
    const cplx a3 = P / Q;
    const cplx a2 = ((w[1] + w[2]) * l[0] + (w[2] + w[0]) * l[1] + (w[0] + w[1]) * l[2]) / sum - P / Q;
    const cplx g1sq = -Q / (sum * sum);
    const cplx g2sq = -w[0] * w[1] * w[2] * d23 * d31 * d12 * sum / (Q * Q);
    if (!detail::feasible_real(g1sq, lscale * lscale, tol, s.reason, "g1^2")) return s;
    if (!detail::feasible_real(g2sq, lscale * lscale, tol, s.reason, "g2^2")) return s;
    if (!(a1.real() < 0.0 && a2.real() < 0.0 && a3.real() < 0.0)) {
        s.reason = "Gamma not positive";
        return s;
    }
    s.bath = detail::bath_from({a1, a2, a3}, {std::sqrt(g1sq.real()), std::sqrt(g2sq.real())},
                               {cplx{std::sqrt(sum.real()), 0.0}, 0.0, 0.0}, Unit::omega_c);
    return s;
}

namespace detail {

// For fixed (alpha, g) with only the first and last coefficient nonzero, the
// weights are linear in p = |c_1|^2, q = c_N^2, r = Re(c_1) c_N.
struct EndCoupling {
    double p{0.0}, q{0.0}, r{0.0};
    double misfit{0.0}; // least-squares residual of the linear system
};

inline EndCoupling solve_end_coupling(const DynamicalMatrix& d, const std::vector<cplx>& target) {
    const auto N = d.lambda.size();
    Eigen::MatrixXd G(2 * N, 3);
    Eigen::VectorXd y(2 * N);
    for (Eigen::Index n = 0; n < N; ++n) {
        const cplx A = d.U(0, n) * d.V(0, n);
        const cplx B = d.U(N - 1, n) * d.V(N - 1, n);
        const cplx K = d.U(0, n) * d.V(N - 1, n) + d.U(N - 1, n) * d.V(0, n);
        G(2 * n, 0) = A.real();
        G(2 * n + 1, 0) = A.imag();
        G(2 * n, 1) = B.real();
        G(2 * n + 1, 1) = B.imag();
        G(2 * n, 2) = K.real();
        G(2 * n + 1, 2) = K.imag();
        y[2 * n] = target[static_cast<std::size_t>(n)].real();
        y[2 * n + 1] = target[static_cast<std::size_t>(n)].imag();
    }
    const Eigen::Vector3d x = G.colPivHouseholderQr().solve(y);
    EndCoupling e{x[0], x[1], x[2], (G * x - y).norm()};
    return e;
}

inline std::optional<std::vector<cplx>> end_coupling_c(const EndCoupling& e, std::size_t N) {
    if (e.p < 0.0 || e.q < 0.0 || e.r * e.r > e.p * e.q) return std::nullopt;
    std::vector<cplx> c(N, 0.0);
    const double cN = std::sqrt(e.q);
    c[N - 1] = cN;
    const double re = cN > 0.0 ? e.r / cN : 0.0;
    c[0] = cplx{re, std::sqrt(std::max(e.p - re * re, 0.0))};
    return c;
}

} // namespace detail

// N = 3 with c_2 = 0 and c_3 free: square real system in (alpha, g1, g2), with
// |c_1|^2, c_3^2 and Re(c_1) c_3 eliminated linearly. Returns every distinct
// feasible solution found from the multistart.
inline std::vector<SurrogateBath> exact_three_mode_all(const ExponentialFit& t, int n_starts = 64, std::uint64_t seed = 1,
                                                       double tol = 1e-8) {
    detail::check_target(t, 3);
    std::vector<SurrogateBath> out;
    const detail::Poly want = detail::poly_from_roots(t.rates);
    double lscale = 0.0, wscale = 0.0;
    for (int k = 0; k < 3; ++k) {
        lscale = std::max(lscale, std::abs(t.rates[k]));
        wscale += std::abs(t.weights[k]);
    }
    auto unpack = [](const Eigen::VectorXd& x, std::vector<cplx>& a, std::vector<double>& g) {
        a = {cplx{x[0], x[1]}, cplx{x[2], x[3]}, cplx{x[4], x[5]}};
        g = {x[6], x[7]};
    };
    auto resid = [&](const Eigen::VectorXd& x) {
        std::vector<cplx> a;
        std::vector<double> g;
        unpack(x, a, g);
        Eigen::VectorXd r = Eigen::VectorXd::Zero(12);
        detail::Poly p;
        detail::chain_charpoly(a, g, p, nullptr);
        for (int k = 0; k < 3; ++k) {
            const double sc = std::pow(lscale + 1e-300, 3 - k);
            r[2 * k] = (p[static_cast<std::size_t>(k)] - want[static_cast<std::size_t>(k)]).real() / sc;
            r[2 * k + 1] = (p[static_cast<std::size_t>(k)] - want[static_cast<std::size_t>(k)]).imag() / sc;
        }
        try {
            const auto d = dynamical_matrix(a, g);
            const auto wt = align_weights(d.lambda, t.rates, t.weights);
            const auto e = detail::solve_end_coupling(d, wt);
            // residual components of the linear fit
            for (Eigen::Index n = 0; n < 3; ++n) {
                const cplx A = d.U(0, n) * d.V(0, n);
                const cplx B = d.U(2, n) * d.V(2, n);
                const cplx K = d.U(0, n) * d.V(2, n) + d.U(2, n) * d.V(0, n);
                const cplx m = e.p * A + e.q * B + e.r * K - wt[static_cast<std::size_t>(n)];
                r[6 + 2 * n] = m.real() / wscale;
                r[7 + 2 * n] = m.imag() / wscale;
            }
        } catch (const NumericError&) {
            r.tail(6).setConstant(1e3);
        }
        return r;
    };
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double re_min = 0.0, im_abs = 0.0;
    for (const auto& l : t.rates) {
        re_min = std::min(re_min, l.real());
        im_abs = std::max(im_abs, std::abs(l.imag()));
    }
    const double gs = lscale;
    for (int s = 0; s < n_starts; ++s) {
        Eigen::VectorXd x(8);
        for (int k = 0; k < 3; ++k) {
            x[2 * k] = 1.5 * re_min * u(rng);
            x[2 * k + 1] = (im_abs + gs) * (2.0 * u(rng) - 1.0);
        }
        x[6] = gs * u(rng) + 1e-3 * gs;
        x[7] = gs * u(rng) + 1e-3 * gs;
        opt::LmOptions o;
        o.max_iterations = 400;
        o.ftol = 0.0;
        const auto lm = opt::levenberg_marquardt(resid, x, o);
        if (!(std::sqrt(2.0 * lm.cost) < 1e-11)) continue;
        std::vector<cplx> a;
        std::vector<double> g;
        unpack(lm.x, a, g);
        for (auto& x : g) x = std::abs(x); // sign of g is a gauge choice
        if (!(a[0].real() < 0.0 && a[1].real() < 0.0 && a[2].real() < 0.0)) continue;
        if (!(g[0] > 0.0 && g[1] > 0.0)) continue;
        DynamicalMatrix d;
        try {
            d = dynamical_matrix(a, g);
        } catch (const NumericError&) {
            continue;
        }
        const auto wt = align_weights(d.lambda, t.rates, t.weights);
        const auto e = detail::solve_end_coupling(d, wt);
        const auto c = detail::end_coupling_c(e, 3);
        if (!c) continue;
        auto b = detail::bath_from(a, g, *c, Unit::omega_c);
        bool dup = false;
        for (const auto& o2 : out) {
            double dd = 0.0;
            for (int k = 0; k < 3; ++k) dd = std::max({dd, std::abs(o2.omega[k] - b.omega[k]), std::abs(o2.gamma[k] - b.gamma[k])});
            for (int k = 0; k < 2; ++k) dd = std::max(dd, std::abs(o2.g[k] - b.g[k]));
            if (dd < tol * (1.0 + lscale)) dup = true;
        }
        if (!dup) out.push_back(b);
    }
    return out;
}

// Path (b): c_2 = c_3 = 0 closed form; if infeasible, path (a) with c_3 free.
inline ExactSolution exact_three_mode(const ExponentialFit& t, double tol = 1e-9) {
    auto s = exact_three_mode_sparse(t, tol);
    if (s.bath) return s;
    const auto all = exact_three_mode_all(t);
    if (!all.empty()) {
        s.bath = all.front();
        s.reason.clear();
    } else {
        s.reason = "no solution with c_2 = 0: " + s.reason;
    }
    return s;
}

// ---------------------------------------------------------------------------
// N = 2 feasibility in g for general (c_1, c_2)

struct TwoModeProbe {
    double g{0.0};
    bool physical{false};     // some alpha branch with both Gamma > 0
    bool exact{false};        // physical branch with an exact coefficient solution
    double margin{-std::numeric_limits<double>::infinity()}; // > 0 inside the feasible set
    std::optional<SurrogateBath> bath;
};

inline TwoModeProbe probe_two_mode(const ExponentialFit& t, double g) {
    detail::check_target(t, 2);
    TwoModeProbe pr;
    pr.g = g;
    const cplx mean = 0.5 * (t.rates[0] + t.rates[1]);
    const cplx h = 0.5 * (t.rates[0] - t.rates[1]);
    const cplx root = std::sqrt(h * h + g * g);
    double wscale = std::abs(t.weights[0]) + std::abs(t.weights[1]);
    for (int branch = 0; branch < 2; ++branch) {
        const cplx a1 = branch == 0 ? mean + root : mean - root;
        const cplx a2 = branch == 0 ? mean - root : mean + root;
        const double gmin = std::min(-2.0 * a1.real(), -2.0 * a2.real());
        if (!(gmin > 0.0)) {
            pr.margin = std::max(pr.margin, gmin / std::abs(mean));
            continue;
        }
        pr.physical = true;
        DynamicalMatrix d;
        try {
            d = dynamical_matrix({a1, a2}, {g});
        } catch (const NumericError&) {
            continue;
        }
        const auto wt = align_weights(d.lambda, t.rates, t.weights);
        const auto e = detail::solve_end_coupling(d, wt);
        // scale-free distance into the feasible cone p, q >= 0, r^2 <= p q
        const double m = std::min({e.p / wscale, e.q / wscale, (e.p * e.q - e.r * e.r) / (wscale * wscale),
                                   gmin / std::abs(mean)});
        pr.margin = std::max(pr.margin, m);
        if (m >= 0.0 && e.misfit < 1e-9 * wscale) {
            pr.exact = true;
            auto c = detail::end_coupling_c(e, 2);
            if (c) pr.bath = detail::bath_from({a1, a2}, {g}, *c, Unit::omega_c);
        }
    }
    return pr;
}

// D_2(g) = min_c sum |w~ - w(g, c)| over the physical branches (infinity if none).
inline double two_mode_distance(const ExponentialFit& t, double g, int n_starts = 8, std::uint64_t seed = 1) {
    const cplx mean = 0.5 * (t.rates[0] + t.rates[1]);
    const cplx h = 0.5 * (t.rates[0] - t.rates[1]);
    const cplx root = std::sqrt(h * h + g * g);
    double best = std::numeric_limits<double>::infinity();
    for (int branch = 0; branch < 2; ++branch) {
        const cplx a1 = branch == 0 ? mean + root : mean - root;
        const cplx a2 = branch == 0 ? mean - root : mean + root;
        if (!(a1.real() < 0.0 && a2.real() < 0.0)) continue;
        try {
            const auto d = dynamical_matrix({a1, a2}, {g});
            const auto wt = align_weights(d.lambda, t.rates, t.weights);
            best = std::min(best, match_weights(d, wt, n_starts, seed).distance);
        } catch (const NumericError&) {
        }
    }
    return best;
}

struct Interval {
    double lo, hi;
};

// Intervals of g in [g_lo, g_hi] where an exact physical N = 2 solution exists;
// edges refined by bisection on the feasibility margin.
inline std::vector<Interval> feasibility_window(const ExponentialFit& t, double g_lo, double g_hi, int n_grid = 4000) {
    auto inside = [&](double g) { return probe_two_mode(t, g).exact; };
    std::vector<Interval> out;
    const double h = (g_hi - g_lo) / n_grid;
    bool prev = inside(g_lo);
    double start = g_lo;
    auto refine = [&](double a, double b) {
        const bool fa = inside(a);
        for (int it = 0; it < 60; ++it) {
            const double m = 0.5 * (a + b);
            if (inside(m) == fa) a = m;
            else b = m;
        }
        return 0.5 * (a + b);
    };
    for (int k = 1; k <= n_grid; ++k) {
        const double g = g_lo + h * k;
        const bool cur = inside(g);
        if (cur && !prev) start = refine(g - h, g);
        if (!cur && prev) out.push_back({start, refine(g - h, g)});
        prev = cur;
    }
    if (prev) out.push_back({start, g_hi});
    return out;
}

// ---------------------------------------------------------------------------
// thermal single mode

struct ThermalMode {
    double omega{0.0}, gamma{0.0}, occupation{0.0};
    double gamma_up{0.0}, gamma_down{0.0};
    cplx c{0.0};

    cplx correlation(double t) const {
        const double at = std::abs(t);
        const cplx z = std::norm(c) * ((occupation + 1.0) * std::exp(cplx{-0.5 * gamma * at, -omega * at}) +
                                       occupation * std::exp(cplx{-0.5 * gamma * at, omega * at}));
        return t >= 0.0 ? z : std::conj(z);
    }
    // Lorentzians at +omega and -omega weighted by gamma_down and gamma_up
    double spectrum(double w) const {
        const double h = 0.5 * gamma;
        return std::norm(c) * ((occupation + 1.0) * gamma / (h * h + (w - omega) * (w - omega)) +
                               occupation * gamma / (h * h + (w + omega) * (w + omega)));
    }
};

inline ThermalMode thermal_single_mode(double omega, double gamma, const Beta& beta, cplx c) {
    if (!(omega > 0.0) || !(gamma > 0.0)) throw DomainError("thermal mode needs positive frequency and width");
    ThermalMode m;
    m.omega = omega;
    m.gamma = gamma;
    m.c = c;
    m.occupation = beta.is_infinite() ? 0.0 : 1.0 / std::expm1(beta.get() * omega);
    m.gamma_up = gamma * m.occupation;
    m.gamma_down = gamma * (m.occupation + 1.0);
    return m;
}

} // namespace tso
