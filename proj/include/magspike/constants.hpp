#pragma once

// Physical constants (CODATA 2018, SI units).
namespace magspike::constants {

inline constexpr double mu0 = 1.25663706212e-6;     // vacuum permeability [T m / A]
inline constexpr double k_boltzmann = 1.380649e-23; // [J / K] (exact)
inline constexpr double mu_bohr = 9.2740100783e-24; // Bohr magneton [J / T]
inline constexpr double hbar = 1.054571817e-34;     // reduced Planck [J s]
inline constexpr double q_electron = 1.602176634e-19; // elementary charge [C] (exact)

// Gyromagnetic ratio in the A/m field convention, gamma = 2 mu_B mu0 / hbar
// [m / (A s)]. Multiplying a field in A/m gives an angular rate in rad/s.
inline constexpr double gyromagnetic = 2.0 * mu_bohr * mu0 / hbar;

} // namespace magspike::constants
