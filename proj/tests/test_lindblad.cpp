#include <gtest/gtest.h>

#include <random>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "tso/lindblad.hpp"

using namespace tso;

namespace {

Eigen::MatrixXcd dense(const SparseOp& a) { return Eigen::MatrixXcd(a); }

Eigen::MatrixXcd pauli_z() { return Eigen::Vector2cd(1.0, -1.0).asDiagonal(); }
Eigen::MatrixXcd pauli_x() {
    Eigen::MatrixXcd x(2, 2);
    x << 0, 1, 1, 0;
    return x;
}

SurrogateBath one_mode(double omega, double gamma, cplx c, int d) { return {{omega}, {}, {gamma}, {c}, {d}, Unit::omega_c}; }

// bath-only model: trivial one-dimensional system, chain left uncoupled
LindbladModel bath_only(const SurrogateBath& b) {
    SystemSpec s;
    s.H = Eigen::MatrixXcd::Zero(1, 1);
    s.couplings = {Eigen::MatrixXcd::Zero(1, 1)};
    return assemble_model(s, {{b, 0, "bath"}});
}

Eigen::VectorXcd vacuum(Eigen::Index n) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
    v[0] = 1.0;
    return v;
}

// Exact propagation through the dense exponential of the generator.
Eigen::MatrixXcd propagate(const SparseOp& l, const Eigen::MatrixXcd& rho, double t) {
    const Eigen::MatrixXcd e = (Eigen::MatrixXcd(l) * t).exp();
    return unvectorize(e * vectorize(rho), rho.rows());
}

SurrogateBath random_chain(std::mt19937_64& rng, std::size_t n, int d) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SurrogateBath b;
    b.unit = Unit::omega_c;
    for (std::size_t k = 0; k < n; ++k) {
        b.omega.push_back(2.0 * u(rng) - 1.0);
        b.gamma.push_back(0.3 + u(rng));
        b.c.push_back(k + 1 == n ? cplx{0.2 + u(rng), 0.0} : cplx{u(rng) - 0.5, u(rng) - 0.5});
        b.dims.push_back(d);
        if (k + 1 < n) b.g.push_back(0.2 + 0.6 * u(rng));
    }
    return b;
}

} // namespace

TEST(OscillatorOps, TwoLevelLowering) {
    const auto ops = build_oscillator_ops({2});
    Eigen::MatrixXcd expect(2, 2);
    expect << 0, 1, 0, 0;
    EXPECT_LT((dense(ops[0]) - expect).norm(), 1e-15);
}

TEST(OscillatorOps, TruncatedCommutator) {
    for (int d : {2, 3, 6}) {
        const Eigen::MatrixXcd b = dense(build_oscillator_ops({d})[0]);
        Eigen::MatrixXcd expect = Eigen::MatrixXcd::Identity(d, d);
        expect(d - 1, d - 1) -= static_cast<double>(d);
        EXPECT_LT((b * b.adjoint() - b.adjoint() * b - expect).norm(), 1e-13) << d;
        const Eigen::VectorXd spec = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(b.adjoint() * b).eigenvalues();
        for (int n = 0; n < d; ++n) EXPECT_NEAR(spec[n], n, 1e-12);
    }
}

TEST(OscillatorOps, FactorsCommute) {
    const auto ops = build_oscillator_ops({3, 2, 4});
    for (const auto& b : ops) EXPECT_EQ(b.rows(), 24);
    const Eigen::MatrixXcd b0 = dense(ops[0]), b2 = dense(ops[2]);
    EXPECT_LT((b0 * b2.adjoint() - b2.adjoint() * b0).norm(), 1e-14);
    // lowering the first factor moves |1,0,0> to |0,0,0>
    const Eigen::VectorXcd e = b0 * Eigen::VectorXcd::Unit(24, 8);
    EXPECT_NEAR(std::abs(e[0]), 1.0, 1e-15);
    EXPECT_THROW(build_oscillator_ops({3, 1}), DomainError);
}

TEST(AssembleModel, EmptyBathIsClosedSystem) {
    SystemSpec s;
    s.H = 0.5 * pauli_z();
    s.couplings = {0.5 * pauli_z()};
    const auto m = assemble_model(s, {});
    EXPECT_EQ(m.dim(), 2);
    EXPECT_TRUE(m.jumps.empty());
    EXPECT_LT((dense(m.H) - s.H).norm(), 1e-15);
}

TEST(AssembleModel, QubitOneModeStructure) {
    SystemSpec s;
    s.H = 2.0 * pauli_z();
    s.couplings = {0.5 * pauli_z()};
    const auto m = assemble_model(s, {{one_mode(1.3, 0.4, {0.7, 0.0}, 5), 0, "b"}});
    EXPECT_EQ(m.dim(), 10);
    ASSERT_EQ(m.jumps.size(), 1u);
    EXPECT_DOUBLE_EQ(m.jumps[0].rate, 0.4);
    // H = H_S + Omega b^dag b + A (c b + c^* b^dag)
    const Eigen::MatrixXcd b = dense(build_oscillator_ops({2, 5})[1]);
    const Eigen::MatrixXcd a = Eigen::kroneckerProduct(Eigen::MatrixXcd(0.5 * pauli_z()), Eigen::MatrixXcd::Identity(5, 5));
    const Eigen::MatrixXcd h = Eigen::kroneckerProduct(Eigen::MatrixXcd(2.0 * pauli_z()), Eigen::MatrixXcd::Identity(5, 5)) +
                               1.3 * b.adjoint() * b + a * (0.7 * b + 0.7 * b.adjoint());
    EXPECT_LT((dense(m.H) - h).norm(), 1e-13);
}

TEST(AssembleModel, SpinBosonLayout) {
    // Ohmic T = Omega_c chain with the spin-boson truncations 5, 4, 4, 7
    SurrogateBath b{{0.512683, 2.53779, 4.53293, 0.151433},
                    {1.82454, 3.20774, 1.60194},
                    {0.056336, 4.42709, 15.7371, 0.110104},
                    {{-0.962917, 0.819128}, {-0.227707, 0.0701249}, {0.231179, -0.137866}, {0.818093, 0.0}},
                    {5, 4, 4, 7},
                    Unit::omega_c};
    SystemSpec s;
    s.H = 2.0 * pauli_z();
    s.couplings = {0.5 * pauli_z()};
    const auto m = assemble_model(s, {{b, 0, "ohmic"}});
    EXPECT_EQ(m.dim(), 2 * 5 * 4 * 4 * 7);
    EXPECT_EQ(m.jumps.size(), 4u);
    EXPECT_EQ(m.factor_labels.back(), "ohmic.mode4");
}

TEST(AssembleModel, Rejections) {
    SystemSpec s;
    s.H = pauli_z();
    Eigen::MatrixXcd a(2, 2);
    a << 0, 1, 0, 0;
    s.couplings = {a};
    EXPECT_THROW(assemble_model(s, {}), DomainError);
    s.couplings = {Eigen::MatrixXcd::Identity(3, 3)};
    EXPECT_THROW(assemble_model(s, {}), ContractError);
    s.couplings = {pauli_z()};
    EXPECT_THROW(assemble_model(s, {{one_mode(1.0, 1.0, 1.0, 3), 1, "b"}}), ContractError);
    auto wrong_unit = one_mode(1.0, 1.0, 1.0, 3);
    wrong_unit.unit = Unit::cm1;
    EXPECT_THROW(assemble_model(s, {{wrong_unit, 0, "b"}}), ContractError);
}

TEST(Liouvillian, AmplitudeDamping) {
    LindbladModel m;
    m.dims = {2};
    m.H = SparseOp(2, 2);
    m.jumps = {{build_oscillator_ops({2})[0], 0.7, "decay"}};
    const SparseOp l = liouvillian(m);
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(2, 2);
    rho(1, 1) = 1.0;
    const Eigen::MatrixXcd d = unvectorize(l * vectorize(rho), 2);
    EXPECT_NEAR(std::abs(d(0, 0) - 0.7), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(d(1, 1) + 0.7), 0.0, 1e-15);
    EXPECT_NEAR(std::abs(d(0, 1)) + std::abs(d(1, 0)), 0.0, 1e-15);
}

TEST(Liouvillian, TracePreservingAndVacuumSteady) {
    std::mt19937_64 rng(5);
    const auto m = bath_only(random_chain(rng, 3, 3));
    const SparseOp l = liouvillian(m);
    const Eigen::Index n = m.dim();
    const Eigen::VectorXcd tr = vectorize(Eigen::MatrixXcd::Identity(n, n));
    EXPECT_LT((l.adjoint() * tr).cwiseAbs().maxCoeff(), 1e-12);
    // the uncoupled chain relaxes to the vacuum
    SystemSpec s;
    s.H = Eigen::MatrixXcd::Zero(1, 1);
    s.couplings = {Eigen::MatrixXcd::Zero(1, 1)};
    auto b = random_chain(rng, 3, 3);
    const auto m0 = assemble_model(s, {{b, 0, "bath"}});
    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(m0.dim(), m0.dim());
    vac(0, 0) = 1.0;
    EXPECT_LT((liouvillian(m0) * vectorize(vac)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Liouvillian, CapacityRefusal) {
    std::mt19937_64 rng(6);
    const auto m = bath_only(random_chain(rng, 3, 4));
    LiouvillianOptions opt;
    opt.nnz_cap = 1000;
    EXPECT_THROW(liouvillian(m, opt), CapacityError);
}

TEST(EvolveMaster, FreePrecession) {
    SystemSpec s;
    s.H = 0.5 * 3.0 * pauli_z();
    const auto m = assemble_model(s, {});
    Eigen::MatrixXcd rho = Eigen::MatrixXcd::Constant(2, 2, 0.5);
    const auto grid = ode::uniform_grid(4.0, 41);
    const auto tr = evolve_master(m, rho, grid);
    for (std::size_t k = 0; k < grid.size(); ++k)
        EXPECT_LT(std::abs(tr.reduced[k](0, 1) - 0.5 * std::exp(cplx{0.0, -3.0 * grid[k]})), 1e-7) << grid[k];
    EXPECT_LT(tr.diagnostics.trace_drift, 1e-10);
}

TEST(EvolveMaster, DampedVacuumStays) {
    SystemSpec s;
    s.H = Eigen::MatrixXcd::Zero(1, 1);
    s.couplings = {Eigen::MatrixXcd::Zero(1, 1)};
    const auto m = assemble_model(s, {{one_mode(1.5, 0.8, 1.0, 4), 0, "b"}});
    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(4, 4);
    vac(0, 0) = 1.0;
    EvolveOptions opt;
    opt.keep_full = true;
    const auto tr = evolve_master(m, vac, ode::uniform_grid(5.0, 6), StateKind::density, opt);
    for (const auto& r : tr.full) EXPECT_LT((r - vac).norm(), 1e-14);
}

TEST(EvolveMaster, MatchesGeneratorExponential) {
    std::mt19937_64 rng(11);
    SystemSpec s;
    s.H = 0.7 * pauli_z() + 0.3 * pauli_x();
    s.couplings = {0.5 * pauli_z()};
    const auto m = assemble_model(s, {{random_chain(rng, 2, 3), 0, "b"}});
    const SparseOp l = liouvillian(m);
    Eigen::MatrixXcd psi_s(2, 2);
    psi_s << 0.3, cplx(0.2, 0.4), cplx(0.2, -0.4), 0.7;
    const Eigen::MatrixXcd rho0 = product_density(m, psi_s);
    EvolveOptions opt;
    opt.keep_full = true;
    opt.ode.rtol = 1e-10;
    opt.ode.atol = 1e-12;
    const auto grid = ode::uniform_grid(3.0, 4);
    const auto tr = evolve_master(m, rho0, grid, StateKind::density, opt);
    for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_LT((tr.full[k] - propagate(l, rho0, grid[k])).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(tr.diagnostics.trace_drift, 1e-9);
    EXPECT_LT(tr.diagnostics.hermiticity_drift, 1e-10);
    EXPECT_GT(tr.diagnostics.min_eigenvalue, -1e-9);

    // non-Hermitian initial operator through the same generator
    Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(m.dim(), m.dim());
    x(0, m.dim() / 2) = 1.0;
    x(3, 1) = cplx{0.0, 0.5};
    const auto tp = evolve_master(m, x, grid, StateKind::pseudo, opt);
    for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_LT((tp.full[k] - propagate(l, x, grid[k])).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(EvolveMaster, PureDephasingKeepsPopulations) {
    SystemSpec s;
    s.H = 2.0 * pauli_z();
    s.couplings = {0.5 * pauli_z()};
    const auto m = assemble_model(s, {{one_mode(1.0, 0.5, {0.8, 0.0}, 6), 0, "b"}});
    const auto tr = evolve_master(m, product_density(m, Eigen::MatrixXcd::Constant(2, 2, 0.5)), ode::uniform_grid(10.0, 51));
    for (const auto& r : tr.reduced) {
        EXPECT_NEAR(r(0, 0).real(), 0.5, 1e-9);
        EXPECT_NEAR(r(1, 1).real(), 0.5, 1e-9);
    }
    EXPECT_LT(std::abs(tr.reduced.back()(0, 1)), 0.5);
}

TEST(EvolveMaster, GridContract) {
    SystemSpec s;
    s.H = pauli_z();
    const auto m = assemble_model(s, {});
    const Eigen::MatrixXcd rho = Eigen::MatrixXcd::Identity(2, 2) / 2.0;
    EXPECT_THROW(evolve_master(m, rho, {0.0, 1.0, 1.0}), ContractError);
    EXPECT_THROW(evolve_master(m, rho, {0.5, 1.0}), ContractError);
    EXPECT_THROW(evolve_master(m, Eigen::MatrixXcd::Identity(3, 3), {0.0, 1.0}), ContractError);
}

TEST(Mcwf, NoJumpsIsUnitary) {
    SystemSpec s;
    s.H = 0.5 * pauli_z() + 0.8 * pauli_x();
    const auto m = assemble_model(s, {});
    const auto grid = ode::uniform_grid(3.0, 7);
    McwfOptions opt;
    opt.trajectories = 5;
    const auto tr = evolve_mcwf(m, Eigen::Vector2cd(1.0, 0.0), grid, opt);
    const auto ex = evolve_master(m, Eigen::MatrixXcd(Eigen::Vector2cd(1.0, 0.0) * Eigen::RowVector2cd(1.0, 0.0)), grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        EXPECT_LT((tr.reduced[k] - ex.reduced[k]).norm(), 1e-7);
        EXPECT_LT(tr.reduced_stderr[k].cwiseAbs().maxCoeff(), 1e-12);
    }
    EXPECT_EQ(tr.diagnostics.jumps, 0);
}

TEST(Mcwf, AmplitudeDampingBinomial) {
    LindbladModel m;
    m.dims = {2};
    m.H = SparseOp(2, 2);
    const double gamma = 1.3;
    m.jumps = {{build_oscillator_ops({2})[0], gamma, "decay"}};
    const auto grid = ode::uniform_grid(3.0, 31);
    McwfOptions opt;
    opt.trajectories = 1000;
    opt.seed = 7;
    const auto tr = evolve_mcwf(m, Eigen::Vector2cd(0.0, 1.0), grid, opt);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double p = std::exp(-gamma * grid[k]);
        const double sigma = std::sqrt(p * (1.0 - p) / 1000.0);
        EXPECT_LE(std::abs(tr.reduced[k](1, 1).real() - p), 3.0 * sigma + 1e-9) << grid[k];
    }
    EXPECT_GT(tr.diagnostics.jumps, 900);
}

TEST(Mcwf, AgreesWithMasterAndIsThreadIndependent) {
    std::mt19937_64 rng(3);
    SystemSpec s;
    s.H = 0.6 * pauli_z() + 0.4 * pauli_x();
    s.couplings = {0.5 * pauli_z()};
    const auto m = assemble_model(s, {{random_chain(rng, 2, 3), 0, "b"}});
    const Eigen::Vector2cd plus(std::sqrt(0.5), std::sqrt(0.5));
    const auto grid = ode::uniform_grid(4.0, 21);
    McwfOptions opt;
    opt.trajectories = 400;
    opt.threads = 1;
    const auto a = evolve_mcwf(m, product_vector(m, plus), grid, opt);
    opt.threads = 3;
    const auto b = evolve_mcwf(m, product_vector(m, plus), grid, opt);
    const auto ex = evolve_master(m, product_density(m, plus * plus.adjoint()), grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        EXPECT_EQ((a.reduced[k] - b.reduced[k]).norm(), 0.0);
        for (Eigen::Index i = 0; i < 2; ++i)
            for (Eigen::Index j = 0; j < 2; ++j) {
                const cplx d = a.reduced[k](i, j) - ex.reduced[k](i, j);
                const cplx se = a.reduced_stderr[k](i, j);
                EXPECT_LE(std::abs(d.real()), 4.0 * se.real() + 1e-7);
                EXPECT_LE(std::abs(d.imag()), 4.0 * se.imag() + 1e-7);
            }
    }
}

TEST(TwoTimeCorrelation, SingleZeroTemperatureMode) {
    const double omega = 1.7, gamma = 0.6, c = 0.8;
    const auto b = one_mode(omega, gamma, c, 4);
    const auto m = bath_only(b);
    const SparseOp F = bath_coupling_operator(m, b, 1);
    const auto grid = ode::uniform_grid(10.0, 101);
    Eigen::MatrixXcd vac = Eigen::MatrixXcd::Zero(4, 4);
    vac(0, 0) = 1.0;
    const auto r = two_time_correlation(m, F, vac, grid);
    EXPECT_TRUE(r.stationary);
    for (std::size_t k = 0; k < grid.size(); ++k)
        EXPECT_LT(std::abs(r.values[k] - c * c * std::exp(cplx{-0.5 * gamma * grid[k], -omega * grid[k]})), 1e-7);
}

TEST(TwoTimeCorrelation, ThermalSingleMode) {
    const double omega = 1.0, gamma = 0.4;
    for (double bw : {0.5, 2.0}) {
        const auto mode = thermal_single_mode(omega, gamma, Beta::value(bw / omega), {0.6, 0.2});
        SystemSpec s;
        s.H = Eigen::MatrixXcd::Zero(1, 1);
        s.couplings = {Eigen::MatrixXcd::Zero(1, 1)};
        const int d = 40;
        const auto m = assemble_model(s, {}, {{mode, d, 0, "th"}});
        const SparseOp b = annihilator(m, 1);
        const SparseOp F = mode.c * b + std::conj(mode.c) * SparseOp(b.adjoint());
        const Eigen::MatrixXcd rho0 = product_density(m, Eigen::MatrixXcd::Identity(1, 1));
        const auto grid = ode::uniform_grid(12.0, 61);
        ode::Options o;
        o.rtol = 1e-9;
        o.atol = 1e-12;
        const auto r = two_time_correlation(m, F, rho0, grid, o);
        EXPECT_TRUE(r.stationary) << r.stationarity_residual;
        for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_LT(std::abs(r.values[k] - mode.correlation(grid[k])), 1e-6) << bw << " " << grid[k];
    }
}

TEST(TwoTimeCorrelation, ChainMatchesClosedForm) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 4; ++trial) {
        const auto b = random_chain(rng, 1 + trial % 3, 5);
        const auto m = bath_only(b);
        const SparseOp F = bath_coupling_operator(m, b, 1);
        double gmin = 1e300;
        for (double g : b.gamma) gmin = std::min(gmin, g);
        const auto grid = ode::uniform_grid(10.0 / gmin, 80);
        ode::Options o;
        o.rtol = 1e-10;
        o.atol = 1e-12;
        const auto r = two_time_correlation(m, F, F, vacuum(m.dim()), grid, o);
        EXPECT_TRUE(r.rank_one);
        const auto rm = two_time_correlation(m, F, Eigen::MatrixXcd(vacuum(m.dim()) * vacuum(m.dim()).adjoint()), grid, o);
        EXPECT_FALSE(rm.rank_one);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const cplx ref = correlation_from_params(b, grid[k]);
            EXPECT_LT(std::abs(r.values[k] - ref), 1e-6) << trial << " " << grid[k];
            EXPECT_LT(std::abs(rm.values[k] - ref), 1e-6) << trial << " " << grid[k];
        }
    }
}

TEST(ReducedState, ProductEntangledAndTrace) {
    Eigen::MatrixXcd a(2, 2), b(3, 3);
    a << 0.25, cplx(0.1, 0.2), cplx(0.1, -0.2), 0.75;
    b = Eigen::Vector3cd(0.5, 0.3, 0.2).asDiagonal();
    b(0, 2) = 0.1;
    b(2, 0) = 0.1;
    const Eigen::MatrixXcd ab = Eigen::kroneckerProduct(a, b);
    EXPECT_LT((reduced_state(ab, {2, 3}, {0}) - a).norm(), 1e-15);
    EXPECT_LT((reduced_state(ab, {2, 3}, {1}) - b).norm(), 1e-15);

    Eigen::VectorXcd bell = Eigen::VectorXcd::Zero(4);
    bell[0] = bell[3] = std::sqrt(0.5);
    const Eigen::MatrixXcd r = reduced_state(bell * bell.adjoint(), {2, 2}, {1});
    EXPECT_LT((r - 0.5 * Eigen::MatrixXcd::Identity(2, 2)).norm(), 1e-15);

    // three factors, kept out of order
    const Eigen::MatrixXcd abc = Eigen::kroneckerProduct(ab, Eigen::MatrixXcd(Eigen::Vector2cd(0.4, 0.6).asDiagonal()));
    const Eigen::MatrixXcd ba = reduced_state(abc, {2, 3, 2}, {1, 0});
    EXPECT_LT((ba - Eigen::kroneckerProduct(b, a)).norm(), 1e-15);
    EXPECT_NEAR(std::abs(reduced_state(abc, {2, 3, 2}, {2}).trace() - abc.trace()), 0.0, 1e-15);
    EXPECT_THROW(reduced_state(abc, {2, 3, 2}, {3}), ContractError);
    EXPECT_THROW(reduced_state(abc, {2, 3, 2}, {1, 1}), ContractError);
}
