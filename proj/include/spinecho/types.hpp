#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/errors.hpp"

namespace spinecho {

inline bool rel_close(double a, double b, double tol) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) <= tol * std::max(scale, 1e-300);
}

// ---------------------------------------------------------------------------
// Cavity

struct CavityParams {
  double omega_c = 0.0;             // rad/s
  double kappa = 0.0;               // rad/s, field (amplitude) damping rate
  double quality_factor = 0.0;      // omega_c / (2 kappa)
  double filling_factor_eta = 1.0;  // (0, 1]
  double char_impedance_Z0 = 50.0;  // ohm
};

inline CavityParams make_cavity(double omega_c, double kappa, double eta,
                                double Z0) {
  return {omega_c, kappa, omega_c / (2.0 * kappa), eta, Z0};
}

inline CavityParams cavity_from_Q(double omega_c, double Q, double eta,
                                  double Z0) {
  return {omega_c, omega_c / (2.0 * Q), Q, eta, Z0};
}

inline const CavityParams& validate(const CavityParams& c) {
  if (!(c.omega_c > 0.0))
    throw validation_error("omega_c", "must be positive");
  if (!(c.kappa > 0.0)) throw validation_error("kappa", "must be positive");
  if (!(c.filling_factor_eta > 0.0) || c.filling_factor_eta > 1.0)
    throw validation_error("filling_factor_eta", "filling factor out of range");
  if (!(c.char_impedance_Z0 > 0.0))
    throw validation_error("char_impedance_Z0", "must be positive");
  if (!rel_close(c.quality_factor, c.omega_c / (2.0 * c.kappa), 1e-12))
    throw validation_error("quality_factor",
                           "inconsistent with omega_c/(2 kappa)");
  return c;
}

// ---------------------------------------------------------------------------
// Spin system

// Families 1,2 lie at alpha = acos(sqrt(2/3)) ~ 35.3 deg to the applied
// field; families 3,4 are orthogonal to it.
inline constexpr double alpha_non_orth() { return 0.6154797086703873; }

struct NVParams {
  double D = 0.0;      // rad/s, zero-field splitting
  double A_hf = 0.0;   // rad/s, axial hyperfine coupling (signed)
  double Q_nuc = 0.0;  // rad/s, nuclear quadrupole term (signed)
  double gamma_e = constants::gamma_e_default;  // rad/s per tesla
  double B_hfs = 0.0;  // tesla, |A_hf| / gamma_e
  std::array<double, 4> alpha_family{};  // radians, angle to applied field
};

inline NVParams make_nv(double D, double A_hf, double Q_nuc,
                        double gamma_e = constants::gamma_e_default) {
  NVParams nv;
  nv.D = D;
  nv.A_hf = A_hf;
  nv.Q_nuc = Q_nuc;
  nv.gamma_e = gamma_e;
  nv.B_hfs = std::abs(A_hf) / gamma_e;
  const double a = alpha_non_orth();
  nv.alpha_family = {a, a, constants::pi / 2.0, constants::pi / 2.0};
  return nv;
}

inline const NVParams& validate(const NVParams& nv) {
  if (!(nv.D > 0.0)) throw validation_error("D", "must be positive");
  if (!(nv.gamma_e > 0.0))
    throw validation_error("gamma_e", "must be positive");
  if (!rel_close(nv.B_hfs, std::abs(nv.A_hf) / nv.gamma_e, 1e-12))
    throw validation_error("B_hfs", "inconsistent with |A_hf|/gamma_e");
  return nv;
}

// ---------------------------------------------------------------------------
// Inhomogeneity model

struct DistributionSpec {
  double db0 = 0.0;    // tesla, HWHM of the local-field Lorentzian
  double dD0 = 0.0;    // rad/s, HWHM of the zero-field-splitting Lorentzian
  double E1 = 0.0;     // rad/s, fast strain scale
  double E2 = 0.0;     // rad/s, slow strain scale
  double A1 = 0.0;     // weight of the slow strain tail
  double d_omega0 = 0.0;  // rad/s, discretization scale of the b-inversion
  double truncation_widths = 8.0;  // quadrature reach in units of each width
};

inline const DistributionSpec& validate(const DistributionSpec& d) {
  if (!(d.db0 > 0.0)) throw validation_error("db0", "must be positive");
  if (!(d.dD0 > 0.0)) throw validation_error("dD0", "must be positive");
  if (!(d.E1 > 0.0)) throw validation_error("E1", "must be positive");
  if (!(d.E2 > 0.0)) throw validation_error("E2", "must be positive");
  if (d.A1 < 0.0) throw validation_error("A1", "must be non-negative");
  if (!(d.d_omega0 > 0.0))
    throw validation_error("d_omega0", "must be positive");
  if (!(d.truncation_widths >= 3.0))
    throw validation_error("truncation_widths", "must be at least 3");
  return d;
}

// ---------------------------------------------------------------------------
// Discretized ensemble

struct GridBin {
  double delta_m = 0.0;  // rad/s, detuning from omega_s
  double g_m = 0.0;      // rad/s, coupling of one spin in the bin
  double N_m = 0.0;      // spins in the bin (real-valued)
};

struct SubEnsembleGrid {
  std::vector<GridBin> bins;
  double omega_s = 0.0;  // rad/s, rotating-frame reference
  double g_ens = 0.0;    // rad/s, sqrt(sum g^2 N), stored redundantly
  int M_delta = 0;
  int M_g = 0;
};

inline double grid_coupling_sq(const SubEnsembleGrid& g) {
  double acc = 0.0;
  for (const auto& b : g.bins) acc += b.g_m * b.g_m * b.N_m;
  return acc;
}

inline const SubEnsembleGrid& validate(const SubEnsembleGrid& g) {
  if (g.bins.empty()) throw validation_error("bins", "grid is empty");
  if (!(g.omega_s > 0.0))
    throw validation_error("omega_s", "must be positive");
  for (const auto& b : g.bins)
    if (b.N_m < 0.0) throw validation_error("N_m", "must be non-negative");
  if (!rel_close(g.g_ens * g.g_ens, grid_coupling_sq(g), 1e-9))
    throw validation_error("g_ens", "inconsistent with sum of g_m^2 N_m");
  return g;
}

// ---------------------------------------------------------------------------
// Drive

struct DriveSegment {
  double t_start = 0.0;   // s
  double duration = 0.0;  // s
  double beta_R = 0.0;    // sqrt(photons/s)
  double beta_I = 0.0;    // sqrt(photons/s)
  double detuning = 0.0;  // rad/s, relative to omega_s
  double ramp = 0.0;      // s, raised-cosine edge length
};

struct DriveWaveform {
  std::vector<DriveSegment> segments;
};

inline const DriveWaveform& validate(const DriveWaveform& w) {
  double prev_end = -1e300;
  for (std::size_t i = 0; i < w.segments.size(); ++i) {
    const auto& s = w.segments[i];
    const std::string name = "segments[" + std::to_string(i) + "]";
    if (!(s.duration > 0.0))
      throw validation_error(name + ".duration", "must be positive");
    if (s.ramp < 0.0 || 2.0 * s.ramp > s.duration)
      throw validation_error(name + ".ramp",
                             "must satisfy 0 <= 2 ramp <= duration");
    if (s.t_start < prev_end)
      throw validation_error(name + ".t_start",
                             "segments overlap or are out of order");
    prev_end = s.t_start + s.duration;
  }
  return w;
}

// Raised-cosine envelope: 0 outside, cosine edges of length `ramp`, flat 1.
inline double segment_envelope(const DriveSegment& s, double t) {
  const double u = t - s.t_start;
  if (u < 0.0 || u > s.duration) return 0.0;
  if (s.ramp > 0.0) {
    if (u < s.ramp)
      return 0.5 * (1.0 - std::cos(constants::pi * u / s.ramp));
    if (u > s.duration - s.ramp)
      return 0.5 *
             (1.0 - std::cos(constants::pi * (s.duration - u) / s.ramp));
  }
  return 1.0;
}

// Drive amplitude at time t in the omega_s frame. Detuned segments are fixed
// tones gated by the envelope, with t=0 the global phase reference.
inline void drive_value(const DriveWaveform& w, double t, double& beta_R,
                        double& beta_I) {
  beta_R = 0.0;
  beta_I = 0.0;
  for (const auto& s : w.segments) {
    const double env = segment_envelope(s, t);
    if (env == 0.0) continue;
    const double c = std::cos(s.detuning * t);
    const double sn = std::sin(s.detuning * t);
    // (beta_R + i beta_I) * exp(-i detuning t)
    beta_R += env * (s.beta_R * c + s.beta_I * sn);
    beta_I += env * (s.beta_I * c - s.beta_R * sn);
  }
}

// ---------------------------------------------------------------------------
// State

struct SystemState {
  double t = 0.0;
  double X_c = 0.0;
  double P_c = 0.0;
  std::vector<double> S_x, S_y, S_z;
};

inline const SystemState& validate(const SystemState& s,
                                   const SubEnsembleGrid& grid) {
  const std::size_t m = grid.bins.size();
  if (s.S_x.size() != m || s.S_y.size() != m || s.S_z.size() != m)
    throw validation_error("S", "component arrays must match the grid size");
  return s;
}

// ---------------------------------------------------------------------------
// Decoherence

struct BiexpSpec {
  double T2A = 0.0;  // s
  double T2B = 0.0;  // s
  double weight_A = 0.0;
  double weight_B = 0.0;
};

inline const BiexpSpec& validate(const BiexpSpec& b) {
  if (!(b.T2A > 0.0)) throw validation_error("T2A", "must be positive");
  if (!(b.T2B > 0.0)) throw validation_error("T2B", "must be positive");
  if (!rel_close(b.weight_A + b.weight_B, 1.0, 1e-9))
    throw validation_error("weight_A", "weights must sum to 1");
  return b;
}

struct DecoherenceSpec {
  double gamma_perp = 0.0;  // rad/s, 1/T2
  double gamma_par = 0.0;   // rad/s, population decay; 0 by default
  std::optional<BiexpSpec> biexp;
};

inline const DecoherenceSpec& validate(const DecoherenceSpec& d) {
  if (d.gamma_perp < 0.0)
    throw validation_error("gamma_perp", "must be non-negative");
  if (d.gamma_par < 0.0)
    throw validation_error("gamma_par", "must be non-negative");
  if (d.biexp) validate(*d.biexp);
  return d;
}

}  // namespace spinecho
