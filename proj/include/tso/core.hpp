// core.hpp: error types, units and small numeric helpers shared by all modules

#pragma once

#include <cmath>
#include <cstdint>
#include <complex>
#include <stdexcept>
#include <string>

namespace tso {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr cplx I{0.0, 1.0};

// Argument outside the mathematical domain of an operation.
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition (shapes, grids, layouts).
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent configuration input.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    double residual{0.0};
    NumericError(const std::string& what, double res = 0.0)
        : std::runtime_error(what), residual(res) {}
};

// Operator or superoperator would exceed the configured memory cap.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Unit { omega_c, cm1, cm1_x100 };

inline std::string unit_name(Unit u) {
    switch (u) {
        case Unit::omega_c: return "omega_c";
        case Unit::cm1: return "cm-1";
        case Unit::cm1_x100: return "100cm-1";
    }
    return "omega_c";
}

inline Unit parse_unit(const std::string& s) {
    if (s == "omega_c") return Unit::omega_c;
    if (s == "cm-1") return Unit::cm1;
    if (s == "100cm-1") return Unit::cm1_x100;
    throw ConfigError("unknown unit '" + s + "'");
}

namespace units {
inline constexpr double kB_cm_per_K = 0.6950348;        // Boltzmann constant in cm^-1 / K
inline constexpr double rad_per_ps_per_cm = 0.1883651567; // 2 pi c in rad / ps per cm^-1

inline double ps_to_inverse_cm(double ps) { return ps * rad_per_ps_per_cm; }
inline double inverse_cm_to_ps(double t) { return t / rad_per_ps_per_cm; }
inline double kelvin_to_cm(double T) { return kB_cm_per_K * T; }
} // namespace units

// splitmix64, used to derive independent RNG streams from (seed, index).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

} // namespace tso
