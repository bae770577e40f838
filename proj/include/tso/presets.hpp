// presets.hpp: published surrogate parameter sets for the reference baths

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tso/spectral.hpp"
#include "tso/surrogate.hpp"

namespace tso::presets {

namespace detail {

inline SurrogateBath make(std::vector<double> omega, std::vector<double> g, std::vector<double> gamma, std::vector<cplx> c,
                          std::vector<int> dims, Unit unit) {
    SurrogateBath b{std::move(omega), std::move(g), std::move(gamma), std::move(c), std::move(dims), unit};
    validate(b);
    return b;
}

// The Adolphs-Renger density is normalized without the 1/pi of the printed
// parameter sets; their coefficients carry an extra sqrt(pi).
inline SurrogateBath rescale_ar(SurrogateBath b) {
    for (auto& c : b.c) c /= std::sqrt(pi);
    return b;
}

} // namespace detail

// Ohmic, units of the cutoff frequency. dims are the spin-boson truncations;
// *_chain_dims the values for the chain-only benchmark.
inline SurrogateBath ohmic_t0() {
    return detail::make({2.70796, 2.13014, 1.15884, 0.310906}, {3.38195, 1.43514, 0.491546},
                        {11.9298, 0.573494, 0.0317143, 0.000795693},
                        {{-0.0333215, -0.0121362}, {0.319, 0.0811955}, {0.760716, 0.0175762}, {0.579218, 0.0}}, {3, 4, 5, 7},
                        Unit::omega_c);
}
inline std::vector<int> ohmic_t0_chain_dims() { return {4, 4, 5, 7}; }

inline SurrogateBath ohmic_t1() {
    return detail::make({0.512683, 2.53779, 4.53293, 0.151433}, {1.82454, 3.20774, 1.60194},
                        {0.056336, 4.42709, 15.7371, 0.110104},
                        {{-0.962917, 0.819128}, {-0.227707, 0.0701249}, {0.231179, -0.137866}, {0.818093, 0.0}}, {5, 4, 4, 7},
                        Unit::omega_c);
}
inline std::vector<int> ohmic_t1_chain_dims() { return {7, 4, 3, 8}; }

inline SurrogateBath ohmic_t2_5() {
    return detail::make({0.306859, 0.361308, 0.167597, 0.0297981, 0.00236395}, {4.17718, 2.1243, 0.673391, 0.166947},
                        {16.0093, 2.76375, 0.00358704, 0.0949691, 0.0517414},
                        {{-0.166675, -0.0342019}, {0.21927, 0.103791}, {1.61933, -0.00703994}, {0.187388, -1.07416}, {1.1553, 0.0}},
                        {3, 3, 4, 4, 6}, Unit::omega_c);
}

// Adolphs-Renger, units of 100 cm^-1.
inline SurrogateBath adolphs_renger_0k() {
    return detail::rescale_ar(detail::make({0.718918, 3.06543, 2.96082, 0.667101}, {2.10958, 3.91248, 1.56527},
                                           {0.00554063, 15.4881, 0.00291091, 0.294244},
                                           {{-0.57271, 0.06491}, {-0.0147923, 0.0820348}, {0.725729, 0.0119678}, {0.409762, 0.0}},
                                           {6, 4, 4, 4}, Unit::cm1_x100));
}

inline SurrogateBath adolphs_renger_77k() {
    return detail::rescale_ar(detail::make({3.05106, 2.74196, 0.00670418, 0.00780109}, {2.74161, 2.01796, 0.33975},
                                           {0.0284151, 11.6481, 0.00549033, 0.0184315},
                                           {{-0.910465, -0.0164266}, {-0.135049, -0.0104797}, {0.524001, 0.317767}, {0.114767, 0.0}},
                                           {5, 4, 6, 8}, Unit::cm1_x100));
}

inline SurrogateBath adolphs_renger_300k() {
    return detail::rescale_ar(detail::make({0.788783, 0.414407, -0.0300357, -0.034035}, {3.10576, 0.978945, 0.294823},
                                           {10.4575, 0.0934767, 0.00983292, 0.0167273},
                                           {{0.189405, 0.0639657}, {1.23326, 0.451035}, {0.0221509, 0.962709}, {0.365249, 0.0}},
                                           {3, 4, 7, 7}, Unit::cm1_x100));
}

// Antisymmetrized Lorentzian, center 227.5, width 20, S = 0.0379 (units of 100 cm^-1).
inline SurrogateBath lorentzian_227_0k() {
    return detail::make({2.275}, {}, {0.197195}, {{0.440408, 0.0}}, {5}, Unit::cm1_x100);
}
inline SurrogateBath lorentzian_227_77k() {
    return detail::make({0.662126, -0.667153}, {2.1788}, {0.264596, 0.0788813}, {{0.333222, -0.000005}, {0.296358, 0.0}}, {4, 4},
                        Unit::cm1_x100);
}
inline SurrogateBath lorentzian_227_300k() {
    return detail::make({-0.00139464, 0.0013106}, {2.2772}, {0.00326568, 0.396252}, {{0.578109, -0.176482}, {0.169995, 0.0}},
                        {4, 4}, Unit::cm1_x100);
}

// Antisymmetrized Lorentzian, center 200, width 10, S = 0.25 (units of 100 cm^-1).
inline SurrogateBath lorentzian_200_0k() {
    return detail::make({2.00}, {}, {0.098296}, {{0.992322, 0.0}}, {6}, Unit::cm1_x100);
}
inline SurrogateBath lorentzian_200_77k() {
    return detail::make({-0.318699, 0.316331}, {1.976}, {0.045988, 0.138442}, {{0.764199, 0.000002}, {0.676024, 0.0}}, {5, 6},
                        Unit::cm1_x100);
}
inline SurrogateBath lorentzian_200_300k() {
    return detail::make({-0.00048954, 0.000480821}, {2.00052}, {0.00953908, 0.190362}, {{1.45733, 0.000003}, {0.343374, 0.0}},
                        {8, 8}, Unit::cm1_x100);
}

// Spectral densities and temperatures that go with the sets above.
inline BathSpec ohmic_spec(Beta beta) { return BathSpec({Ohmic{1.0, 1.0}}, beta, Unit::omega_c); }

// Adolphs-Renger density with frequencies in 100 cm^-1.
inline BathSpec adolphs_renger_spec(Beta beta_per_u) {
    AdolphsRenger ar;
    ar.cutoff1 /= 100.0;
    ar.cutoff2 /= 100.0;
    return BathSpec({ar}, beta_per_u, Unit::cm1_x100);
}

// Inverse temperature in units of (100 cm^-1)^-1.
inline Beta kelvin_per_u(double T) { return Beta::from_temperature(units::kelvin_to_cm(T) / 100.0); }

struct Named {
    std::string name;
    SurrogateBath bath;
};

inline std::vector<Named> all() {
    return {{"ohmic_t0", ohmic_t0()},
            {"ohmic_t1", ohmic_t1()},
            {"ohmic_t2.5", ohmic_t2_5()},
            {"ar_0k", adolphs_renger_0k()},
            {"ar_77k", adolphs_renger_77k()},
            {"ar_300k", adolphs_renger_300k()},
            {"al227_0k", lorentzian_227_0k()},
            {"al227_77k", lorentzian_227_77k()},
            {"al227_300k", lorentzian_227_300k()},
            {"al200_0k", lorentzian_200_0k()},
            {"al200_77k", lorentzian_200_77k()},
            {"al200_300k", lorentzian_200_300k()}};
}

} // namespace tso::presets
