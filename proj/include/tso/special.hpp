// special.hpp: complex trigamma function

#pragma once

#include <array>
#include <cmath>
#include <complex>

#include "tso/core.hpp"

namespace tso {

// psi'(z). Shifts Re z above 10 with psi'(z) = psi'(z+1) + 1/z^2, then sums
// the asymptotic series up to B_12.
inline cplx trigamma(cplx z) {
    if (z.imag() == 0.0 && z.real() <= 0.0 && z.real() == std::floor(z.real()))
        throw DomainError("trigamma: pole at nonpositive integer");
    cplx acc{0.0, 0.0};
    while (z.real() < 10.0) {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    static constexpr std::array<double, 6> bern{1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0,
                                                -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0};
    const cplx iz = 1.0 / z;
    const cplx iz2 = iz * iz;
    cplx series = iz + 0.5 * iz2;
    cplx p = iz * iz2; // z^-(2k+1)
    for (double b : bern) {
        series += b * p;
        p *= iz2;
    }
    return acc + series;
}

} // namespace tso
