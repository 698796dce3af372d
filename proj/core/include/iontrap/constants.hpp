#pragma once

#include <numbers>

// SI constants (CODATA 2018 exact / recommended values).
namespace iontrap::constants {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double elementary_charge = 1.602176634e-19;  // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double coulomb_constant = 1.0 / (4.0 * pi * vacuum_permittivity);
inline constexpr double boltzmann = 1.380649e-23;  // J/K
inline constexpr double hbar = 1.054571817e-34;  // J s
inline constexpr double speed_of_light = 299792458.0;  // m/s
inline constexpr double atomic_mass_unit = 1.66053906660e-27;  // kg
inline constexpr double electron_mass = 9.1093837015e-31;  // kg

}  // namespace iontrap::constants

namespace iontrap::units {

inline constexpr double um = 1e-6;
inline constexpr double nm = 1e-9;
inline constexpr double MHz = 1e6;
inline constexpr double kHz = 1e3;
inline constexpr double meV = 1e-3;

/// Angular frequency (rad/s) from an ordinary frequency in Hz.
constexpr double angular(double hz) { return constants::two_pi * hz; }
/// Ordinary frequency (Hz) from an angular frequency.
constexpr double hertz(double rad_per_s) { return rad_per_s / constants::two_pi; }

}  // namespace iontrap::units
