// lindblad.hpp: truncated system-chain models, master equation and quantum jump integration

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "tso/core.hpp"
#include "tso/ode.hpp"
#include "tso/parallel.hpp"
#include "tso/surrogate.hpp"

namespace tso {

using SparseOp = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using Triplet = Eigen::Triplet<cplx>;

namespace detail {

inline Eigen::Index product_of(const std::vector<int>& dims, std::size_t from = 0, std::size_t to = std::size_t(-1)) {
    Eigen::Index p = 1;
    for (std::size_t i = from; i < std::min(to, dims.size()); ++i) p *= dims[i];
    return p;
}

inline SparseOp identity(Eigen::Index n) {
    SparseOp m(n, n);
    m.setIdentity();
    return m;
}

inline SparseOp to_sparse(const Eigen::MatrixXcd& a, double drop = 0.0) {
    std::vector<Triplet> t;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (std::abs(a(i, j)) > drop) t.emplace_back(i, j, a(i, j));
    SparseOp m(a.rows(), a.cols());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

inline SparseOp kron(const SparseOp& a, const SparseOp& b) {
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(a.nonZeros()) * static_cast<std::size_t>(b.nonZeros()));
    for (Eigen::Index i = 0; i < a.outerSize(); ++i)
        for (SparseOp::InnerIterator ia(a, i); ia; ++ia)
            for (Eigen::Index k = 0; k < b.outerSize(); ++k)
                for (SparseOp::InnerIterator ib(b, k); ib; ++ib)
                    t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(), ia.value() * ib.value());
    SparseOp m(a.rows() * b.rows(), a.cols() * b.cols());
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

// I (x) local (x) I with local acting on the given factors [first, first + k).
inline SparseOp embed(const SparseOp& local, const std::vector<int>& dims, std::size_t first, std::size_t count = 1) {
    const Eigen::Index left = product_of(dims, 0, first);
    const Eigen::Index mid = product_of(dims, first, first + count);
    const Eigen::Index right = product_of(dims, first + count);
    if (local.rows() != mid || local.cols() != mid) throw ContractError("operator does not match its factor dimension");
    std::vector<Triplet> t;
    t.reserve(static_cast<std::size_t>(left * right * local.nonZeros()));
    for (Eigen::Index l = 0; l < left; ++l)
        for (Eigen::Index i = 0; i < local.outerSize(); ++i)
            for (SparseOp::InnerIterator it(local, i); it; ++it)
                for (Eigen::Index r = 0; r < right; ++r)
                    t.emplace_back((l * mid + it.row()) * right + r, (l * mid + it.col()) * right + r, it.value());
    const Eigen::Index n = left * mid * right;
    SparseOp m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

inline SparseOp annihilation(int d) {
    if (d < 2) throw DomainError("mode dimension must be at least 2");
    std::vector<Triplet> t;
    for (int n = 1; n < d; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
    SparseOp b(d, d);
    b.setFromTriplets(t.begin(), t.end());
    return b;
}

inline double max_abs(const SparseOp& a) {
    double m = 0.0;
    for (Eigen::Index k = 0; k < a.nonZeros(); ++k) m = std::max(m, std::abs(a.valuePtr()[k]));
    return m;
}

inline double hermiticity_defect(const SparseOp& a) {
    const SparseOp ah = a.adjoint();
    return max_abs(SparseOp(a - ah));
}

inline double hermiticity_defect(const Eigen::MatrixXcd& a) { return (a - a.adjoint()).cwiseAbs().maxCoeff(); }

} // namespace detail

// Annihilation operator of each factor, embedded in the full product space.
inline std::vector<SparseOp> build_oscillator_ops(const std::vector<int>& dims) {
    for (int d : dims)
        if (d < 2) throw DomainError("mode dimension must be at least 2");
    std::vector<SparseOp> ops;
    for (std::size_t n = 0; n < dims.size(); ++n) ops.push_back(detail::embed(detail::annihilation(dims[n]), dims, n));
    return ops;
}

struct Jump {
    SparseOp op;
    double rate{0.0};
    std::string label;
};

struct Observable {
    std::string name;
    SparseOp op;
};

struct LindbladModel {
    std::vector<int> dims;          // system factors first, then one per bath mode
    std::size_t system_factors{1};
    std::vector<std::string> factor_labels;
    std::vector<double> occupation; // steady-state thermal occupation per factor
    SparseOp H;
    std::vector<Jump> jumps;
    std::vector<Observable> observables;
    Unit unit{Unit::omega_c};

    Eigen::Index dim() const { return detail::product_of(dims); }
    Eigen::Index system_dim() const { return detail::product_of(dims, 0, system_factors); }
    Eigen::Index environment_dim() const { return detail::product_of(dims, system_factors); }
};

// Annihilation operator of one bath factor of a model.
inline SparseOp annihilator(const LindbladModel& m, std::size_t factor) {
    if (factor < m.system_factors || factor >= m.dims.size()) throw ContractError("factor " + std::to_string(factor) + " is not a bath mode");
    return detail::embed(detail::annihilation(m.dims[factor]), m.dims, factor);
}

inline void validate(const LindbladModel& m) {
    if (m.dims.empty() || m.system_factors > m.dims.size()) throw ContractError("model layout is empty or inconsistent");
    for (int d : m.dims)
        if (d < 1) throw ContractError("factor dimension must be positive");
    const Eigen::Index n = m.dim();
    if (m.H.rows() != n || m.H.cols() != n) throw ContractError("Hamiltonian does not match the layout");
    const double scale = std::max(detail::max_abs(m.H), 1e-300);
    if (detail::hermiticity_defect(m.H) >= 1e-12 * scale) throw DomainError("Hamiltonian is not Hermitian");
    for (const auto& j : m.jumps) {
        if (!(j.rate > 0.0)) throw DomainError("jump rates must be positive: " + j.label);
        if (j.op.rows() != n || j.op.cols() != n) throw ContractError("jump operator does not match the layout: " + j.label);
    }
    for (const auto& o : m.observables)
        if (o.op.rows() != n || o.op.cols() != n) throw ContractError("observable does not match the layout: " + o.name);
}

// System Hamiltonian with its coupling operators. dims factor the system space.
struct SystemSpec {
    Eigen::MatrixXcd H;
    std::vector<Eigen::MatrixXcd> couplings;
    std::vector<int> dims;
    Unit unit{Unit::omega_c};
};

struct BathAttachment {
    SurrogateBath bath;
    std::size_t coupling{0};
    std::string label{"bath"};
};

struct ThermalAttachment {
    ThermalMode mode;
    int dim{2};
    std::size_t coupling{0};
    std::string label{"thermal"};
};

inline LindbladModel assemble_model(const SystemSpec& sys, const std::vector<BathAttachment>& baths,
                                    const std::vector<ThermalAttachment>& thermal = {}) {
    const Eigen::Index ds = sys.H.rows();
    if (ds < 1 || sys.H.cols() != ds) throw ContractError("system Hamiltonian must be square");
    if (detail::hermiticity_defect(sys.H) > 1e-12 * std::max(1.0, sys.H.cwiseAbs().maxCoeff()))
        throw DomainError("system Hamiltonian is not Hermitian");
    std::vector<int> sdims = sys.dims.empty() ? std::vector<int>{static_cast<int>(ds)} : sys.dims;
    if (detail::product_of(sdims) != ds) throw ContractError("system dims do not factor the Hamiltonian");
    for (std::size_t k = 0; k < sys.couplings.size(); ++k) {
        const auto& a = sys.couplings[k];
        if (a.rows() != ds || a.cols() != ds) throw ContractError("coupling operator " + std::to_string(k) + " has the wrong shape");
        if (detail::hermiticity_defect(a) > 1e-12 * std::max(1.0, a.cwiseAbs().maxCoeff()))
            throw DomainError("coupling operator " + std::to_string(k) + " is not Hermitian");
    }

    LindbladModel m;
    m.unit = sys.unit;
    m.dims = sdims;
    m.system_factors = sdims.size();
    for (std::size_t i = 0; i < sdims.size(); ++i) m.factor_labels.push_back("system" + (sdims.size() > 1 ? std::to_string(i) : ""));
    for (const auto& b : baths) {
        validate(b.bath);
        if (b.bath.unit != sys.unit) throw ContractError("bath '" + b.label + "' is in " + unit_name(b.bath.unit) + ", system in " + unit_name(sys.unit));
        if (b.coupling >= sys.couplings.size()) throw ContractError("bath '" + b.label + "' refers to a missing coupling operator");
        if (b.bath.dims.size() != b.bath.omega.size()) throw ContractError("bath '" + b.label + "' lacks local dimensions");
        for (std::size_t n = 0; n < b.bath.dims.size(); ++n) {
            m.dims.push_back(b.bath.dims[n]);
            m.factor_labels.push_back(b.label + ".mode" + std::to_string(n + 1));
        }
    }
    for (const auto& th : thermal) {
        if (th.coupling >= sys.couplings.size()) throw ContractError("thermal mode '" + th.label + "' refers to a missing coupling operator");
        m.dims.push_back(th.dim);
        m.factor_labels.push_back(th.label);
    }
    m.occupation.assign(m.dims.size(), 0.0);
    for (std::size_t f = m.system_factors; f < m.dims.size(); ++f)
        if (m.dims[f] < 2) throw DomainError("mode dimension must be at least 2");

    const Eigen::Index n = m.dim();
    const Eigen::Index env = m.environment_dim();
    m.H = detail::kron(detail::to_sparse(sys.H), detail::identity(env));
    std::vector<SparseOp> a_full;
    for (const auto& a : sys.couplings) a_full.push_back(detail::embed(detail::to_sparse(a), m.dims, 0, m.system_factors));

    std::size_t f = m.system_factors;
    for (const auto& b : baths) {
        const auto& bath = b.bath;
        const std::size_t first = f;
        SparseOp F(n, n);
        std::vector<SparseOp> ann;
        for (std::size_t k = 0; k < bath.omega.size(); ++k) ann.push_back(detail::embed(detail::annihilation(m.dims[first + k]), m.dims, first + k));
        for (std::size_t k = 0; k < ann.size(); ++k) {
            const SparseOp bd = ann[k].adjoint();
            m.H += bath.omega[k] * SparseOp(bd * ann[k]);
            if (k + 1 < ann.size()) {
                const SparseOp hop = bd * ann[k + 1];
                m.H += bath.g[k] * SparseOp(hop + SparseOp(hop.adjoint()));
            }
            F += bath.c[k] * ann[k] + std::conj(bath.c[k]) * bd;
            m.jumps.push_back({ann[k], bath.gamma[k], b.label + ".mode" + std::to_string(k + 1)});
        }
        m.H += SparseOp(a_full[b.coupling] * F);
        f += bath.omega.size();
    }
    for (const auto& th : thermal) {
        const SparseOp b = detail::embed(detail::annihilation(th.dim), m.dims, f);
        const SparseOp bd = b.adjoint();
        m.H += th.mode.omega * SparseOp(bd * b);
        m.H += SparseOp(a_full[th.coupling] * SparseOp(th.mode.c * b + std::conj(th.mode.c) * bd));
        if (th.mode.gamma_down > 0.0) m.jumps.push_back({b, th.mode.gamma_down, th.label + ".down"});
        if (th.mode.gamma_up > 0.0) m.jumps.push_back({bd, th.mode.gamma_up, th.label + ".up"});
        m.occupation[f] = th.mode.occupation;
        ++f;
    }
    m.H.prune(cplx{0.0});
    m.H.makeCompressed();
    validate(m);
    return m;
}

// Non-Hermitian drift H - (i/2) sum gamma L^dag L.
inline SparseOp effective_hamiltonian(const LindbladModel& m) {
    SparseOp k = m.H;
    for (const auto& j : m.jumps) k -= cplx{0.0, 0.5 * j.rate} * SparseOp(SparseOp(j.op.adjoint()) * j.op);
    k.makeCompressed();
    return k;
}

struct LiouvillianOptions {
    double nnz_cap{2e8};
};

// Column-stacked generator: vec(A X B) = (B^T (x) A) vec(X).
inline SparseOp liouvillian(const LindbladModel& m, const LiouvillianOptions& opt = {}) {
    validate(m);
    const Eigen::Index n = m.dim();
    const SparseOp k = effective_hamiltonian(m);
    double estimate = 2.0 * static_cast<double>(n) * static_cast<double>(k.nonZeros());
    for (const auto& j : m.jumps) estimate += static_cast<double>(j.op.nonZeros()) * static_cast<double>(j.op.nonZeros());
    if (estimate > opt.nnz_cap)
        throw CapacityError("Liouvillian of dimension " + std::to_string(n) + "^2 needs about " + std::to_string(static_cast<long long>(estimate)) +
                            " nonzeros, cap is " + std::to_string(static_cast<long long>(opt.nnz_cap)) + "; use quantum jumps instead");
    const SparseOp id = detail::identity(n);
    const SparseOp kc = k.conjugate();
    SparseOp l = cplx{0.0, -1.0} * detail::kron(id, k) + cplx{0.0, 1.0} * detail::kron(kc, id);
    for (const auto& j : m.jumps) l += j.rate * detail::kron(SparseOp(j.op.conjugate()), j.op);
    l.prune(cplx{0.0});
    l.makeCompressed();
    return l;
}

inline Eigen::VectorXcd vectorize(const Eigen::MatrixXcd& rho) { return Eigen::Map<const Eigen::VectorXcd>(rho.data(), rho.size()); }

inline Eigen::MatrixXcd unvectorize(const Eigen::VectorXcd& v, Eigen::Index n) {
    if (v.size() != n * n) throw ContractError("vector length is not a square");
    return Eigen::Map<const Eigen::MatrixXcd>(v.data(), n, n);
}

// Partial trace keeping the listed factors, in their original order.
inline Eigen::MatrixXcd reduced_state(const Eigen::MatrixXcd& full, const std::vector<int>& dims, const std::vector<std::size_t>& keep) {
    const Eigen::Index n = detail::product_of(dims);
    if (full.rows() != n || full.cols() != n) throw ContractError("state does not match the layout");
    std::vector<bool> kept(dims.size(), false);
    for (auto k : keep) {
        if (k >= dims.size()) throw ContractError("factor index " + std::to_string(k) + " out of range");
        if (kept[k]) throw ContractError("factor index " + std::to_string(k) + " listed twice");
        kept[k] = true;
    }
    std::vector<std::size_t> order(keep);
    std::sort(order.begin(), order.end());
    // contiguous leading block: direct sum over the environment index
    bool leading = true;
    for (std::size_t i = 0; i < order.size(); ++i) leading = leading && order[i] == i;
    if (leading && std::equal(order.begin(), order.end(), keep.begin())) {
        const Eigen::Index dk = detail::product_of(dims, 0, keep.size());
        const Eigen::Index de = n / dk;
        Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(dk, dk);
        for (Eigen::Index b = 0; b < dk; ++b)
            for (Eigen::Index a = 0; a < dk; ++a) r(a, b) = full.block(a * de, b * de, de, de).diagonal().sum();
        return r;
    }
    Eigen::Index dk = 1;
    for (auto k : keep) dk *= dims[k];
    const Eigen::Index dt = n / dk;
    // kept and traced multi-index of every basis state
    std::vector<Eigen::Index> kidx(n), tidx(n);
    std::vector<int> digit(dims.size(), 0);
    for (Eigen::Index s = 0; s < n; ++s) {
        Eigen::Index rem = s;
        for (std::size_t f = dims.size(); f-- > 0;) {
            digit[f] = static_cast<int>(rem % dims[f]);
            rem /= dims[f];
        }
        Eigen::Index ki = 0, ti = 0;
        for (auto k : keep) ki = ki * dims[k] + digit[k];
        for (std::size_t f = 0; f < dims.size(); ++f)
            if (!kept[f]) ti = ti * dims[f] + digit[f];
        kidx[s] = ki;
        tidx[s] = ti;
    }
    std::vector<std::vector<Eigen::Index>> by_trace(dt, std::vector<Eigen::Index>(dk));
    for (Eigen::Index s = 0; s < n; ++s) by_trace[tidx[s]][kidx[s]] = s;
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(dk, dk);
    for (const auto& row : by_trace)
        for (Eigen::Index b = 0; b < dk; ++b)
            for (Eigen::Index a = 0; a < dk; ++a) r(a, b) += full(row[a], row[b]);
    return r;
}

inline std::vector<std::size_t> system_factor_ids(const LindbladModel& m) {
    std::vector<std::size_t> ids(m.system_factors);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return ids;
}

// system (x) bath steady state: vacuum for chains, truncated Gibbs for thermal modes
inline Eigen::MatrixXcd product_density(const LindbladModel& m, const Eigen::MatrixXcd& system_rho) {
    if (system_rho.rows() != m.system_dim() || system_rho.cols() != m.system_dim()) throw ContractError("system state has the wrong shape");
    Eigen::VectorXd env = Eigen::VectorXd::Ones(1);
    for (std::size_t f = m.system_factors; f < m.dims.size(); ++f) {
        Eigen::VectorXd p = Eigen::VectorXd::Zero(m.dims[f]);
        const double nbar = m.occupation[f];
        const double ratio = nbar / (nbar + 1.0);
        double w = 1.0;
        for (int k = 0; k < m.dims[f]; ++k, w *= ratio) p[k] = w;
        p /= p.sum();
        Eigen::VectorXd next(env.size() * p.size());
        for (Eigen::Index i = 0; i < env.size(); ++i) next.segment(i * p.size(), p.size()) = env[i] * p;
        env = std::move(next);
    }
    const Eigen::Index de = env.size();
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(m.dim(), m.dim());
    for (Eigen::Index b = 0; b < system_rho.cols(); ++b)
        for (Eigen::Index a = 0; a < system_rho.rows(); ++a)
            if (system_rho(a, b) != cplx{0.0}) rho.block(a * de, b * de, de, de).diagonal() = system_rho(a, b) * env.cast<cplx>();
    return rho;
}

// system (x) |0...0>
inline Eigen::VectorXcd product_vector(const LindbladModel& m, const Eigen::VectorXcd& system_psi) {
    if (system_psi.size() != m.system_dim()) throw ContractError("system state has the wrong length");
    const Eigen::Index de = m.environment_dim();
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(m.dim());
    for (Eigen::Index a = 0; a < system_psi.size(); ++a) psi[a * de] = system_psi[a];
    return psi;
}

inline cplx expectation(const SparseOp& op, const Eigen::MatrixXcd& rho) {
    cplx s{0.0};
    for (Eigen::Index i = 0; i < op.outerSize(); ++i)
        for (SparseOp::InnerIterator it(op, i); it; ++it) s += it.value() * rho(it.col(), it.row());
    return s;
}

inline cplx expectation(const SparseOp& op, const Eigen::VectorXcd& psi) { return psi.dot(op * psi); }

enum class StateKind { density, pseudo };

struct EvolveOptions {
    ode::Options ode{};
    bool keep_reduced{true};
    bool keep_full{false};
    std::vector<std::size_t> keep; // factors of the reduced state; default: the system
};

struct TrajectoryDiagnostics {
    long steps{0}, rejected{0}, rhs_evaluations{0};
    double rtol{0.0}, atol{0.0};
    double trace_drift{0.0};
    double hermiticity_drift{0.0};
    double min_eigenvalue{0.0}; // of the reduced state
    std::size_t trajectories{0};
    long jumps{0};
    long restarts{0};
};

struct Trajectory {
    std::vector<double> t;
    std::vector<Eigen::MatrixXcd> reduced;
    std::vector<Eigen::MatrixXcd> reduced_stderr; // quantum jumps only: standard errors of real and imaginary parts
    std::vector<std::string> observable_names;
    std::vector<std::vector<cplx>> observables;   // [observable][time]
    std::vector<std::vector<cplx>> observable_stderr;
    std::vector<Eigen::MatrixXcd> full;
    TrajectoryDiagnostics diagnostics;
};

namespace detail {

// Jump operator with at most one entry per row, applied by gathering.
struct ShiftOp {
    std::vector<Eigen::Index> col;
    std::vector<cplx> val;
    double rate{0.0};
};

inline std::optional<ShiftOp> as_shift(const Jump& j) {
    ShiftOp s;
    s.rate = j.rate;
    s.col.assign(j.op.rows(), -1);
    s.val.assign(j.op.rows(), cplx{0.0});
    for (Eigen::Index i = 0; i < j.op.outerSize(); ++i) {
        int count = 0;
        for (SparseOp::InnerIterator it(j.op, i); it; ++it) {
            if (it.value() == cplx{0.0}) continue;
            if (++count > 1) return std::nullopt;
            s.col[i] = it.col();
            s.val[i] = it.value();
        }
    }
    return s;
}

// Right-hand side of the matrix-form master equation.
class MasterRhs {
public:
    MasterRhs(const LindbladModel& m, StateKind kind) : kind_(kind), k_(effective_hamiltonian(m)) {
        for (const auto& j : m.jumps) {
            if (auto s = as_shift(j)) shifts_.push_back(std::move(*s));
            else general_.push_back(j);
        }
    }

    void operator()(double, const Eigen::MatrixXcd& rho, Eigen::MatrixXcd& out) {
        x_.noalias() = k_ * rho;
        x_ *= cplx{0.0, -1.0};
        if (kind_ == StateKind::density) {
            out = x_ + x_.adjoint();
        } else {
            y_.noalias() = k_ * rho.adjoint();
            out = x_ + cplx{0.0, 1.0} * y_.adjoint();
        }
        const Eigen::Index n = rho.rows();
        for (const auto& s : shifts_) {
            for (Eigen::Index b = 0; b < n; ++b) {
                const Eigen::Index cb = s.col[b];
                if (cb < 0) continue;
                const cplx vb = s.rate * std::conj(s.val[b]);
                const cplx* src = rho.data() + cb * n;
                cplx* dst = out.data() + b * n;
                for (Eigen::Index a = 0; a < n; ++a)
                    if (s.col[a] >= 0) dst[a] += s.val[a] * vb * src[s.col[a]];
            }
        }
        for (const auto& j : general_) {
            x_.noalias() = j.op * rho;
            y_.noalias() = j.op * x_.adjoint();
            out += j.rate * y_.adjoint();
        }
    }

private:
    StateKind kind_;
    SparseOp k_;
    std::vector<ShiftOp> shifts_;
    std::vector<Jump> general_;
    Eigen::MatrixXcd x_, y_;
};

inline void record_state(const LindbladModel& m, const EvolveOptions& opt, const std::vector<std::size_t>& keep, std::size_t k,
                         const Eigen::MatrixXcd& rho, Trajectory& tr) {
    if (opt.keep_reduced) tr.reduced[k] = reduced_state(rho, m.dims, keep);
    if (opt.keep_full) tr.full[k] = rho;
    for (std::size_t o = 0; o < m.observables.size(); ++o) tr.observables[o][k] = expectation(m.observables[o].op, rho);
}

inline void prepare(const LindbladModel& m, const EvolveOptions& opt, const std::vector<double>& grid, Trajectory& tr) {
    if (grid.empty() || grid.front() != 0.0) throw ContractError("time grid must start at 0");
    for (std::size_t k = 1; k < grid.size(); ++k)
        if (!(grid[k] > grid[k - 1])) throw ContractError("time grid must be strictly increasing");
    tr.t = grid;
    if (opt.keep_reduced) tr.reduced.resize(grid.size());
    if (opt.keep_full) tr.full.resize(grid.size());
    for (const auto& o : m.observables) tr.observable_names.push_back(o.name);
    tr.observables.assign(m.observables.size(), std::vector<cplx>(grid.size()));
    tr.diagnostics.rtol = opt.ode.rtol;
    tr.diagnostics.atol = opt.ode.atol;
}

} // namespace detail

inline Trajectory evolve_master(const LindbladModel& m, const Eigen::MatrixXcd& rho0, const std::vector<double>& grid,
                                StateKind kind = StateKind::density, const EvolveOptions& opt = {}) {
    validate(m);
    const Eigen::Index n = m.dim();
    if (rho0.rows() != n || rho0.cols() != n) throw ContractError("initial state does not match the model dimension");
    const auto keep = opt.keep.empty() ? system_factor_ids(m) : opt.keep;
    Trajectory tr;
    detail::prepare(m, opt, grid, tr);
    const cplx trace0 = rho0.trace();
    detail::MasterRhs rhs(m, kind);
    ode::DormandPrince<Eigen::MatrixXcd> dp(opt.ode);
    Eigen::MatrixXcd rho = rho0;
    double min_eig = 0.0;
    dp.integrate(rhs, rho, grid, [&](std::size_t k, double, const Eigen::MatrixXcd& y) {
        detail::record_state(m, opt, keep, k, y, tr);
        tr.diagnostics.trace_drift = std::max(tr.diagnostics.trace_drift, std::abs(y.trace() - trace0));
        if (kind == StateKind::density) {
            tr.diagnostics.hermiticity_drift = std::max(tr.diagnostics.hermiticity_drift, detail::hermiticity_defect(y));
            if (opt.keep_reduced) {
                const Eigen::MatrixXcd h = 0.5 * (tr.reduced[k] + tr.reduced[k].adjoint());
                min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(h, Eigen::EigenvaluesOnly).eigenvalues().minCoeff());
            }
        }
    });
    tr.diagnostics.min_eigenvalue = min_eig;
    tr.diagnostics.steps = dp.stats().steps;
    tr.diagnostics.rejected = dp.stats().rejected;
    tr.diagnostics.rhs_evaluations = dp.stats().rhs_evaluations;
    return tr;
}

struct McwfOptions {
    ode::Options ode{};
    std::size_t trajectories{1000};
    std::uint64_t seed{1};
    double jump_tol{1e-10}; // bisection tolerance, fraction of the step
    int threads{0};
    int max_restarts{10};
    std::vector<std::size_t> keep;
};

namespace detail {

struct TrajectoryRecord {
    std::vector<Eigen::MatrixXcd> reduced;
    std::vector<std::vector<cplx>> observables;
    long steps{0}, rejected{0}, rhs{0}, jumps{0}, restarts{0};
};

inline Eigen::MatrixXcd reduced_pure(const Eigen::VectorXcd& psi, const std::vector<int>& dims, const std::vector<std::size_t>& keep,
                                     std::size_t system_factors) {
    bool leading = keep.size() == system_factors;
    for (std::size_t i = 0; i < keep.size() && leading; ++i) leading = keep[i] == i;
    if (leading) {
        const Eigen::Index dk = product_of(dims, 0, system_factors);
        const Eigen::Index de = psi.size() / dk;
        const Eigen::Map<const Eigen::MatrixXcd> a(psi.data(), de, dk); // a(e, s) = psi[s * de + e]
        return a.transpose() * a.conjugate();
    }
    return reduced_state(psi * psi.adjoint(), dims, keep);
}

// One quantum jump trajectory; restarts with a fresh stream on norm underflow.
inline TrajectoryRecord run_trajectory(const LindbladModel& m, const SparseOp& k_eff, const Eigen::VectorXcd& psi0,
                                       const std::vector<double>& grid, const McwfOptions& opt, const std::vector<std::size_t>& keep,
                                       std::size_t index) {
    TrajectoryRecord rec;
    for (int attempt = 0;; ++attempt) {
        if (attempt > opt.max_restarts) throw NumericError("trajectory " + std::to_string(index) + " exceeded its restart budget");
        std::mt19937_64 rng(stream_seed(stream_seed(opt.seed, index), static_cast<std::uint64_t>(attempt)));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        auto draw = [&] {
            double r = 0.0;
            while (r == 0.0) r = unif(rng);
            return r;
        };
        rec.reduced.assign(grid.size(), Eigen::MatrixXcd());
        rec.observables.assign(m.observables.size(), std::vector<cplx>(grid.size()));
        auto record = [&](std::size_t k, const Eigen::VectorXcd& psi) {
            const Eigen::VectorXcd u = psi / psi.norm();
            rec.reduced[k] = reduced_pure(u, m.dims, keep, m.system_factors);
            for (std::size_t o = 0; o < m.observables.size(); ++o) rec.observables[o][k] = expectation(m.observables[o].op, u);
        };
        auto f = [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) {
            dy.noalias() = k_eff * y;
            dy *= cplx{0.0, -1.0};
        };
        ode::DormandPrince<Eigen::VectorXcd> dp(opt.ode);
        Eigen::VectorXcd psi = psi0 / psi0.norm(), k1, y_new, k_new, y_mid, k_mid;
        double t = 0.0, r = draw();
        record(0, psi);
        f(t, psi, k1);
        double h = dp.initial_step(f, t, psi, k1, grid.back());
        bool underflow = false;
        for (std::size_t gk = 1; gk < grid.size() && !underflow; ++gk) {
            const double target = grid[gk];
            while (t < target) {
                if (opt.ode.h_max > 0.0) h = std::min(h, opt.ode.h_max);
                bool last = false;
                if (t + 1.01 * h >= target) {
                    h = target - t;
                    last = true;
                }
                const double err = dp.attempt(f, t, psi, k1, h, y_new, k_new);
                if (err > 1.0) {
                    h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
                    if (!(h > 1e-14 * std::max(1.0, t))) throw NumericError("step size collapsed at t = " + std::to_string(t), h);
                    continue;
                }
                const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                if (y_new.squaredNorm() > r) {
                    t = last ? target : t + h;
                    psi.swap(y_new);
                    k1.swap(k_new);
                    h = last ? std::max(h, h * fac) : h * fac;
                    continue;
                }
                // the norm crossed the threshold inside this step
                double lo = 0.0, hi = 1.0;
                while (hi - lo > opt.jump_tol) {
                    const double mid = 0.5 * (lo + hi);
                    dp.attempt(f, t, psi, k1, mid * h, y_mid, k_mid);
                    (y_mid.squaredNorm() > r ? lo : hi) = mid;
                }
                dp.attempt(f, t, psi, k1, hi * h, y_mid, k_mid);
                const double tj = (hi == 1.0 && last) ? target : t + hi * h;
                std::vector<double> w(m.jumps.size());
                double total = 0.0;
                for (std::size_t j = 0; j < m.jumps.size(); ++j) total += w[j] = m.jumps[j].rate * (m.jumps[j].op * y_mid).squaredNorm();
                if (!(total > 0.0) || !(y_mid.squaredNorm() > 1e-250)) {
                    underflow = true;
                    break;
                }
                const double pick = unif(rng) * total;
                std::size_t j = 0;
                for (double acc = w[0]; acc < pick && j + 1 < w.size(); acc += w[++j]) {
                }
                psi = m.jumps[j].op * y_mid;
                psi /= psi.norm();
                ++rec.jumps;
                t = tj;
                r = draw();
                f(t, psi, k1);
                h = std::max(hi * h, 1e-3 * h);
            }
            if (!underflow) record(gk, psi);
        }
        rec.steps += dp.stats().steps;
        rec.rejected += dp.stats().rejected;
        rec.rhs += dp.stats().rhs_evaluations;
        if (!underflow) return rec;
        ++rec.restarts;
    }
}

} // namespace detail

// Quantum jump unraveling averaged over opt.trajectories runs.
inline Trajectory evolve_mcwf(const LindbladModel& m, const Eigen::VectorXcd& psi0, const std::vector<double>& grid, const McwfOptions& opt = {}) {
    validate(m);
    if (psi0.size() != m.dim()) throw ContractError("initial state does not match the model dimension");
    if (!(psi0.norm() > 0.0)) throw DomainError("initial state has zero norm");
    if (opt.trajectories < 1) throw DomainError("need at least one trajectory");
    EvolveOptions eo;
    eo.ode = opt.ode;
    Trajectory tr;
    detail::prepare(m, eo, grid, tr);
    const auto keep = opt.keep.empty() ? system_factor_ids(m) : opt.keep;
    const SparseOp k_eff = effective_hamiltonian(m);

    std::vector<detail::TrajectoryRecord> recs(opt.trajectories);
    parallel_for(opt.trajectories, resolve_threads(opt.threads),
                 [&](std::size_t i) { recs[i] = detail::run_trajectory(m, k_eff, psi0, grid, opt, keep, i); });

    const double nt = static_cast<double>(opt.trajectories);
    // two-pass standard error of the real and imaginary parts
    auto stderr_of = [nt](cplx mean, auto&& sample) {
        if (nt < 2.0) return cplx{0.0};
        double vr = 0.0, vi = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(nt); ++i) {
            const cplx d = sample(i) - mean;
            vr += d.real() * d.real();
            vi += d.imag() * d.imag();
        }
        return cplx{std::sqrt(vr / (nt - 1.0) / nt), std::sqrt(vi / (nt - 1.0) / nt)};
    };
    const Eigen::Index dk = recs[0].reduced[0].rows();
    tr.reduced_stderr.resize(grid.size());
    tr.observable_stderr.assign(m.observables.size(), std::vector<cplx>(grid.size()));
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(dk, dk);
        for (const auto& r : recs) sum += r.reduced[k];
        tr.reduced[k] = sum / nt;
        tr.reduced_stderr[k].resize(dk, dk);
        for (Eigen::Index a = 0; a < dk; ++a)
            for (Eigen::Index b = 0; b < dk; ++b)
                tr.reduced_stderr[k](a, b) = stderr_of(tr.reduced[k](a, b), [&](std::size_t i) { return recs[i].reduced[k](a, b); });
        for (std::size_t o = 0; o < m.observables.size(); ++o) {
            cplx s{0.0};
            for (const auto& r : recs) s += r.observables[o][k];
            tr.observables[o][k] = s / nt;
            tr.observable_stderr[o][k] = stderr_of(s / nt, [&](std::size_t i) { return recs[i].observables[o][k]; });
        }
    }
    auto& d = tr.diagnostics;
    d.trajectories = opt.trajectories;
    for (const auto& r : recs) {
        d.steps += r.steps;
        d.rejected += r.rejected;
        d.rhs_evaluations += r.rhs;
        d.jumps += r.jumps;
        d.restarts += r.restarts;
    }
    for (std::size_t k = 0; k < grid.size(); ++k) d.trace_drift = std::max(d.trace_drift, std::abs(tr.reduced[k].trace() - 1.0));
    return tr;
}

struct RegressionSeries {
    std::vector<double> t;
    std::vector<cplx> values;
    double stationarity_residual{0.0};
    bool stationary{true};
    bool rank_one{false}; // propagated as a single vector
    ode::Stats stats;
};

// Tr[B e^{Lt}[A rho0]] on the grid.
inline RegressionSeries two_time_correlation(const LindbladModel& m, const SparseOp& B, const SparseOp& A, const Eigen::MatrixXcd& rho0,
                                              const std::vector<double>& grid, const ode::Options& opt = {}) {
    validate(m);
    const Eigen::Index n = m.dim();
    if (rho0.rows() != n || rho0.cols() != n || A.rows() != n || B.rows() != n) throw ContractError("operators do not match the model dimension");
    RegressionSeries out;
    detail::MasterRhs rhs(m, StateKind::pseudo);
    Eigen::MatrixXcd l0;
    rhs(0.0, rho0, l0);
    out.stationarity_residual = l0.norm() / std::max(rho0.norm(), 1e-300);
    out.stationary = out.stationarity_residual < 1e-8;
    EvolveOptions eo;
    eo.ode = opt;
    Trajectory tmp;
    detail::prepare(m, eo, grid, tmp);
    out.t = grid;
    out.values.resize(grid.size());
    Eigen::MatrixXcd rho = A * rho0;
    ode::DormandPrince<Eigen::MatrixXcd> dp(opt);
    dp.integrate(rhs, rho, grid, [&](std::size_t k, double, const Eigen::MatrixXcd& y) { out.values[k] = expectation(B, y); });
    out.stats = dp.stats();
    return out;
}

inline RegressionSeries two_time_correlation(const LindbladModel& m, const SparseOp& F, const Eigen::MatrixXcd& rho0,
                                              const std::vector<double>& grid, const ode::Options& opt = {}) {
    return two_time_correlation(m, F, F, rho0, grid, opt);
}

// Pure stationary phi: when every jump annihilates phi and phi is an
// eigenvector of the drift, A|phi><phi| stays rank one and only the ket is
// propagated. Otherwise falls back to the matrix form.
inline RegressionSeries two_time_correlation(const LindbladModel& m, const SparseOp& B, const SparseOp& A, const Eigen::VectorXcd& phi,
                                              const std::vector<double>& grid, const ode::Options& opt = {}) {
    validate(m);
    const Eigen::Index n = m.dim();
    if (phi.size() != n || A.rows() != n || B.rows() != n) throw ContractError("operators do not match the model dimension");
    const SparseOp k_eff = effective_hamiltonian(m);
    const Eigen::VectorXcd kphi = k_eff * phi;
    const double nphi = phi.squaredNorm();
    const cplx e = phi.dot(kphi) / nphi;
    const double scale = std::max(detail::max_abs(k_eff), 1e-300) * std::sqrt(nphi);
    bool dark = (kphi - e * phi).norm() < 1e-12 * scale;
    for (const auto& j : m.jumps) dark = dark && (j.op * phi).norm() < 1e-12 * scale;
    if (!dark) return two_time_correlation(m, B, A, Eigen::MatrixXcd(phi * phi.adjoint()), grid, opt);

    RegressionSeries out;
    out.rank_one = true;
    out.stationarity_residual = 2.0 * std::abs(e.imag());
    out.stationary = out.stationarity_residual < 1e-8;
    EvolveOptions eo;
    eo.ode = opt;
    Trajectory tmp;
    detail::prepare(m, eo, grid, tmp);
    out.t = grid;
    out.values.resize(grid.size());
    auto f = [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) {
        dy.noalias() = k_eff * y;
        dy *= cplx{0.0, -1.0};
    };
    Eigen::VectorXcd psi = A * phi;
    const Eigen::VectorXcd bphi = B.adjoint() * phi;
    ode::DormandPrince<Eigen::VectorXcd> dp(opt);
    dp.integrate(f, psi, grid, [&](std::size_t k, double t, const Eigen::VectorXcd& y) {
        out.values[k] = bphi.dot(y) * std::exp(cplx{0.0, 1.0} * std::conj(e) * t);
    });
    out.stats = dp.stats();
    return out;
}

// Coupling operator F = sum_n (c_n b_n + c_n^* b_n^dag) of one bath in an assembled model.
inline SparseOp bath_coupling_operator(const LindbladModel& m, const SurrogateBath& bath, std::size_t first_factor) {
    if (first_factor + bath.omega.size() > m.dims.size()) throw ContractError("bath factors out of range");
    SparseOp F(m.dim(), m.dim());
    for (std::size_t k = 0; k < bath.omega.size(); ++k) {
        const SparseOp b = detail::embed(detail::annihilation(m.dims[first_factor + k]), m.dims, first_factor + k);
        F += bath.c[k] * b + std::conj(bath.c[k]) * SparseOp(b.adjoint());
    }
    return F;
}

} // namespace tso
