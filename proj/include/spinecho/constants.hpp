#pragma once

namespace spinecho::constants {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// SI, CODATA 2018.
inline constexpr double hbar = 1.054571817e-34;      // J s
inline constexpr double mu_bohr = 9.2740100783e-24;  // J/T
inline constexpr double mu0 = 4.0e-7 * pi;           // T m/A

// Ground-state electronic g-factor of the NV- defect.
inline constexpr double g_nv = 2.0028;

// Electron gyromagnetic constant g*mu_B/hbar, rad/s per tesla.
inline constexpr double gamma_e_default = g_nv * mu_bohr / hbar;

// Carbon site density of diamond, 1/m^3; ppm concentrations refer to it.
inline constexpr double diamond_site_density = 1.763e29;

}  // namespace spinecho::constants
