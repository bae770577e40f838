#include <gtest/gtest.h>

#include <random>

#include "tso/spectral.hpp"

using namespace tso;

namespace {

BathSpec ohmic(double beta_wc) {
    return BathSpec({Ohmic{1.0, 1.0}}, std::isinf(beta_wc) ? Beta::zero_temperature() : Beta::value(beta_wc));
}

const AntisymLorentzian al_peak{227.5, 20.0, 0.0379};

} // namespace

TEST(Trigamma, KnownValues) {
    EXPECT_NEAR(trigamma(1.0).real(), pi * pi / 6.0, 1e-14);
    EXPECT_NEAR(trigamma(2.0).real(), pi * pi / 6.0 - 1.0, 1e-14);
    EXPECT_NEAR(trigamma(0.5).real(), pi * pi / 2.0, 1e-13);
    // pi^2 + 8 * Catalan
    EXPECT_NEAR(trigamma(0.25).real(), 17.197329154507110739, 1e-12);
    EXPECT_THROW(trigamma(0.0), DomainError);
    EXPECT_THROW(trigamma(-3.0), DomainError);
}

TEST(Trigamma, RecurrenceAndReflection) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.05, 6.0), v(-8.0, 8.0);
    for (int i = 0; i < 200; ++i) {
        const cplx z{u(rng), v(rng)};
        const cplx lhs = trigamma(z);
        const cplx rhs = trigamma(z + 1.0) + 1.0 / (z * z);
        EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::abs(lhs));
        // psi'(1-z) + psi'(z) = pi^2 / sin^2(pi z)
        const cplx s = std::sin(pi * z);
        const cplx refl = pi * pi / (s * s);
        EXPECT_LT(std::abs(trigamma(1.0 - z) + lhs - refl), 1e-11 * (std::abs(lhs) + std::abs(refl)));
    }
}

TEST(SpectralDensity, PointValues) {
    const SpectralComponent o = Ohmic{2.0, 1.0};
    EXPECT_EQ(evaluate_j(o, 0.0), 0.0);
    EXPECT_NEAR(evaluate_j(o, 2.0), pi * 2.0 * std::exp(-1.0), 1e-14);
    EXPECT_THROW(evaluate_j(o, -1.0), DomainError);

    const SpectralComponent al = al_peak;
    const double W = al_peak.center, G = al_peak.width, S = al_peak.huang_rhys;
    const double approx = 2.0 * S * W * W / G;
    EXPECT_NEAR(evaluate_j(al, W), approx, approx * G * G / (W * W));

    const SpectralComponent tab = Tabulated{{{0.0, 0.0}, {1.0, 2.0}, {3.0, 0.0}}};
    EXPECT_NEAR(evaluate_j(tab, 0.5), 1.0, 1e-15);
    EXPECT_NEAR(evaluate_j(tab, 2.0), 1.0, 1e-15);
    EXPECT_THROW(evaluate_j(tab, 3.5), DomainError);
}

TEST(SpectralDensity, Validation) {
    EXPECT_THROW(BathSpec({Ohmic{-1.0, 1.0}}, Beta::zero_temperature()), DomainError);
    EXPECT_THROW(BathSpec({AntisymLorentzian{1.0, 0.0, 1.0}}, Beta::zero_temperature()), DomainError);
    EXPECT_THROW(BathSpec({Tabulated{{{0.0, 1.0}, {1.0, 1.0}}}}, Beta::zero_temperature()), DomainError);
    EXPECT_THROW(Beta::value(0.0), DomainError);
}

TEST(ReorganizationEnergy, ReferenceBaths) {
    const BathSpec ar({AdolphsRenger{}}, Beta::zero_temperature(), Unit::cm1);
    EXPECT_NEAR(reorganization_energy(ar), 19.93, 0.01);
    const BathSpec ar_al({AdolphsRenger{}, al_peak}, Beta::zero_temperature(), Unit::cm1);
    EXPECT_NEAR(reorganization_energy(ar_al), 28.55, 0.01);
    const BathSpec polymer({Ohmic{200.0, 0.25}, AntisymLorentzian{1000.0, 20.0, 0.25}}, Beta::zero_temperature(), Unit::cm1);
    EXPECT_NEAR(reorganization_energy(polymer), 300.0, 1e-6);
    // closed forms: scale * cutoff and S * center
    EXPECT_NEAR(reorganization_energy(SpectralComponent{Ohmic{3.0, 0.5}}), 1.5, 1e-10);
    EXPECT_NEAR(reorganization_energy(SpectralComponent{al_peak}), al_peak.huang_rhys * al_peak.center, 1e-9);
}

TEST(ThermalCorrelation, OhmicZeroTemperatureOrigin) {
    const auto spec = ohmic(INFINITY);
    EXPECT_NEAR(thermal_correlation(spec, 0.0).real(), 1.0, 1e-15);
    EXPECT_EQ(thermal_correlation(spec, 0.0).imag(), 0.0);
    EXPECT_THROW(thermal_correlation(spec, -1.0), DomainError);
}

TEST(ThermalCorrelation, OhmicOriginMatchesDensityIntegral) {
    // beta = 1: C(0) = 1 + 2 (pi^2/6 - 1)
    EXPECT_NEAR(thermal_correlation(ohmic(1.0), 0.0).real(), 1.0 + 2.0 * (pi * pi / 6.0 - 1.0), 1e-13);
}

TEST(ThermalCorrelation, ClosedFormAgreesWithQuadrature) {
    for (double b : {double(INFINITY), 1.0, 0.4}) {
        const auto spec = ohmic(b);
        const SpectralComponent c = spec.components[0];
        for (int k = 0; k < 50; ++k) {
            const double t = 10.0 * k / 49.0;
            const cplx exact = thermal_correlation(spec, t);
            const cplx q = correlation_quadrature(c, spec.beta, t);
            EXPECT_LT(std::abs(exact - q), 1e-6 * std::abs(exact)) << "beta=" << b << " t=" << t;
        }
    }
}

TEST(ThermalCorrelation, OhmicZeroTemperatureModulus) {
    const auto s = sample_correlation(ohmic(INFINITY), 10.0, 101);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double t = s.time(k);
        EXPECT_NEAR(std::abs(s.values[k]), 1.0 / (1.0 + t * t), 1e-14);
        if (k > 0) {
            EXPECT_LE(std::abs(s.values[k]), std::abs(s.values[k - 1]));
        }
    }
    const auto two = sample_correlation(ohmic(1.0), 5.0, 2);
    ASSERT_EQ(two.size(), 2u);
    EXPECT_EQ(two.time(1), 5.0);
}

TEST(ThermalCorrelation, LorentzianResiduesAgreeWithQuadrature) {
    for (double T : {0.0, 53.5, 208.5}) {
        const Beta b = Beta::from_temperature(T);
        const SpectralComponent c = al_peak;
        for (double t : {0.0, 0.004, 0.02, 0.1}) {
            const cplx r = thermal_correlation(c, b, t);
            const cplx q = correlation_quadrature(c, b, t);
            EXPECT_LT(std::abs(r - q), 1e-7 * std::abs(thermal_correlation(c, b, 0.0))) << "T=" << T << " t=" << t;
        }
    }
}

TEST(ThermalCorrelation, OriginIsRealPositiveAndAdditive) {
    const BathSpec mix({AdolphsRenger{}, al_peak}, Beta::from_temperature(53.5), Unit::cm1);
    const cplx c0 = thermal_correlation(mix, 0.0);
    EXPECT_GT(c0.real(), 0.0);
    EXPECT_LT(std::abs(c0.imag()), 1e-10 * c0.real());
    for (double t : {0.0, 0.01, 0.05}) {
        const cplx sum = thermal_correlation(SpectralComponent{AdolphsRenger{}}, mix.beta, t) +
                         thermal_correlation(SpectralComponent{al_peak}, mix.beta, t);
        EXPECT_LT(std::abs(thermal_correlation(mix, t) - sum), 1e-12 * std::abs(sum));
    }
}

TEST(NegativeTime, ConjugateExtension) {
    CorrelationSeries s;
    s.dt = 1.0;
    for (int k = 0; k < 3; ++k) s.values.push_back(std::exp(cplx{-1.0, -1.0} * static_cast<double>(k)));
    const auto two = extend_negative_time(s);
    ASSERT_EQ(two.size(), 5u);
    EXPECT_LT(std::abs(two[1] - std::exp(cplx{-1.0, 1.0})), 1e-15);
    CorrelationSeries r;
    r.dt = 0.5;
    r.values = {2.0, 1.0, 0.5};
    const auto e = extend_negative_time(r);
    for (std::size_t k = 0; k < e.size(); ++k) EXPECT_EQ(e[k], e[e.size() - 1 - k]);
}

TEST(Fourier, ZeroTemperatureIsTwiceJ) {
    const std::vector<SpectralComponent> fam{Ohmic{1.0, 1.0}, AdolphsRenger{}, al_peak};
    for (const auto& c : fam) {
        const double s = frequency_scale(c);
        for (int k = -20; k <= 40; ++k) {
            const double w = s * 0.1 * k;
            const double expect = w > 0.0 ? 2.0 * evaluate_j(c, w) : 0.0;
            EXPECT_NEAR(correlation_fourier(c, Beta::zero_temperature(), w), expect, 1e-12 * std::max(1.0, expect));
        }
    }
}

TEST(Fourier, DetailedBalance) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.01, 3.0);
    const SpectralComponent c = Ohmic{1.0, 1.0};
    for (double b : {0.4, 1.0, 2.5}) {
        for (int i = 0; i < 50; ++i) {
            const double w = u(rng);
            const double ratio = correlation_fourier(c, Beta::value(b), -w) / correlation_fourier(c, Beta::value(b), w);
            EXPECT_NEAR(ratio, std::exp(-b * w), 1e-12 * std::exp(-b * w));
        }
        // removable point: 2/beta * lim J/w
        EXPECT_NEAR(correlation_fourier(c, Beta::value(b), 0.0), 2.0 * pi / b, 1e-12);
    }
}
