#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/types.hpp"

namespace spinecho {

using cdouble = std::complex<double>;

struct ComplexSpectrum {
  std::vector<double> omega;   // rad/s
  std::vector<cdouble> value;
};

// Back-action of the spin ensemble on the cavity at probe frequency omega:
// K(w) = sum_m N_m g_m^2 / (w - w_m + i gamma_perp), w_m = omega_s + delta_m.
inline cdouble K_of_omega(const SubEnsembleGrid& grid, double gamma_perp,
                          double omega) {
  cdouble acc = 0.0;
  for (const auto& b : grid.bins) {
    const double det = omega - (grid.omega_s + b.delta_m);
    // 1/(det + i*gp) written out to keep the loop branch-free
    const double inv = 1.0 / (det * det + gamma_perp * gamma_perp);
    acc += b.N_m * b.g_m * b.g_m * inv * cdouble(det, -gamma_perp);
  }
  return acc;
}

inline ComplexSpectrum K_of_omega(const SubEnsembleGrid& grid,
                                  double gamma_perp,
                                  const std::vector<double>& omega) {
  ComplexSpectrum s;
  s.omega = omega;
  s.value.reserve(omega.size());
  for (double w : omega) s.value.push_back(K_of_omega(grid, gamma_perp, w));
  return s;
}

// Steady-state intracavity field under a monochromatic drive of amplitude
// beta0 (sqrt photon flux) at omega.
inline cdouble steady_state_field(const CavityParams& c, cdouble K,
                                  double beta0, double omega) {
  // Im K <= 0 is absorption, so it adds to the cavity linewidth here.
  const cdouble denom(c.kappa - K.imag(), -(omega - c.omega_c) + K.real());
  if (std::abs(denom) == 0.0)
    throw numeric_error("steady state is singular at this frequency");
  return std::sqrt(2.0 * c.kappa) * beta0 / denom;
}

// Single-port reflection with the ensemble loaded. gamma_perp = 0 keeps
// |r| = 1 at every frequency: the denominator is then the conjugate of
// the numerator shifted by the real kernel.
inline cdouble reflection_coeff(const CavityParams& c, cdouble K,
                                double omega) {
  const double det = omega - c.omega_c;
  const cdouble denom = cdouble(det, c.kappa) - K;
  if (std::abs(denom) == 0.0)
    throw numeric_error("reflection is singular at this frequency");
  return cdouble(0.0, 2.0 * c.kappa) / denom - 1.0;
}

// Empty-cavity reflection of the same port.
inline cdouble bare_reflection(const CavityParams& c, double omega) {
  const double det = omega - c.omega_c;
  return cdouble(c.kappa, det) / cdouble(c.kappa, -det);
}

// Magnetic susceptibility of the ensemble implied by the kernel, with the
// mode filling factor dividing out the geometry.
inline cdouble susceptibility(const CavityParams& c, cdouble K) {
  return -std::conj(K) /
         (constants::two_pi * c.filling_factor_eta * c.omega_c);
}

struct DeembedResult {
  ComplexSpectrum K;
  std::vector<std::size_t> flagged;  // indices where inversion broke down
};

// Recovers K(w) from a measured reflection trace referenced against a
// saturated-ensemble trace of the same line. The instrument background
// cancels in the ratio; the measured traces are complex conjugates of the
// model reflection, which the ratio handles explicitly.
inline DeembedResult deembed_K(const CavityParams& c,
                               const std::vector<double>& omega,
                               const std::vector<cdouble>& S11,
                               const std::vector<cdouble>& S11_sat) {
  if (S11.size() != omega.size() || S11_sat.size() != omega.size())
    throw validation_error("S11", "trace lengths disagree with the axis");
  DeembedResult out;
  out.K.omega = omega;
  out.K.value.resize(omega.size(), 0.0);
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const double det = omega[i] - c.omega_c;
    if (std::abs(S11_sat[i]) == 0.0) {
      out.flagged.push_back(i);
      continue;
    }
    const cdouble r =
        std::conj(S11[i] / S11_sat[i]) * bare_reflection(c, omega[i]);
    const cdouble denom = r + 1.0;
    if (std::abs(denom) < 1e-12) {
      out.flagged.push_back(i);
      continue;
    }
    out.K.value[i] =
        cdouble(det, c.kappa) - cdouble(0.0, 2.0 * c.kappa) / denom;
  }
  return out;
}

}  // namespace spinecho
