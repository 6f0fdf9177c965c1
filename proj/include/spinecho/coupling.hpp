#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/distributions.hpp"
#include "spinecho/fieldmap.hpp"
#include "spinecho/types.hpp"

namespace spinecho {

struct FamilyCoupling {
  double g_x = 0.0;  // rad/s, coupling of the X-like transition branch
  double g_y = 0.0;  // rad/s
};

// Transition couplings of one defect orientation to the mode field
// (dBx along the static in-plane field, dBy vertical, both tesla per
// photon). psi is the azimuth of the defect's transverse axes. Families
// 0/1 have their symmetry axis tilted off the static field, families 2/3
// lie orthogonal to it. Family 1 (3) maps onto family 0 (2) under the
// x -> -x mirror of a symmetric wire array, so only the even-index
// formulas are distinct.
inline FamilyCoupling family_couplings(double dBx, double dBy, double psi,
                                       int family, const NVParams& nv) {
  const double c = std::cos(psi), s = std::sin(psi);
  const double sqrt2 = std::sqrt(2.0);
  const double sqrt23 = std::sqrt(2.0 / 3.0);
  FamilyCoupling out;
  switch (family) {
    case 0: {
      const double u = std::abs(dBx - sqrt2 * dBy);
      out.g_x = nv.gamma_e / std::sqrt(3.0) * std::abs(c) * u;
      out.g_y = nv.gamma_e / std::sqrt(3.0) * std::abs(s) * u;
      break;
    }
    case 1: {
      const double u = std::abs(dBx + sqrt2 * dBy);
      out.g_x = nv.gamma_e / std::sqrt(3.0) * std::abs(c) * u;
      out.g_y = nv.gamma_e / std::sqrt(3.0) * std::abs(s) * u;
      break;
    }
    case 2:
      out.g_x = nv.gamma_e * std::abs(c * dBx + sqrt23 * s * dBy);
      out.g_y = nv.gamma_e * std::abs(s * dBx - sqrt23 * c * dBy);
      break;
    case 3:
      out.g_x = nv.gamma_e * std::abs(c * dBx - sqrt23 * s * dBy);
      out.g_y = nv.gamma_e * std::abs(s * dBx + sqrt23 * c * dBy);
      break;
    default:
      throw validation_error("family", "must be 0..3");
  }
  return out;
}

struct CouplingBin {
  double g_m = 0.0;        // rad/s, rms coupling of the bin
  double weight = 0.0;     // effective spin count
  double weight_orth = 0.0;  // part contributed by the orthogonal families
};

struct CouplingDensity {
  std::vector<CouplingBin> bins;  // ascending g_m, empty bins removed
  double g_ens = 0.0;             // sqrt(sum w g^2) over kept bins, rad/s
  double orth_coupling_sq = 0.0;      // sum w g^2 before the cutoff
  double non_orth_coupling_sq = 0.0;  //
  double dropped_coupling_sq = 0.0;   // sum w g^2 lost below the cutoff
  int M_g = 0;
};

inline const CouplingDensity& validate(const CouplingDensity& d) {
  if (d.bins.empty()) throw validation_error("bins", "no coupling bins");
  if (!(d.g_ens > 0.0)) throw validation_error("g_ens", "must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < d.bins.size(); ++i) {
    const auto& b = d.bins[i];
    if (!(b.g_m > 0.0) || !(b.weight > 0.0) || b.weight_orth < 0.0 ||
        b.weight_orth > b.weight * (1.0 + 1e-12))
      throw validation_error("bins", "invalid bin content");
    if (i && b.g_m <= d.bins[i - 1].g_m)
      throw validation_error("bins", "bin couplings must increase");
    sq += b.weight * b.g_m * b.g_m;
  }
  if (!rel_close(sq, d.g_ens * d.g_ens, 1e-9))
    throw validation_error("g_ens", "inconsistent with bin contents");
  return d;
}

// Histogram of single-spin couplings over the mode volume. Each grid cell
// of the field map contributes, for every sampled transverse azimuth, the
// two branch couplings of one tilted and one orthogonal family; the mirror
// families are folded in by weight. Weights are chosen so that
// sum w g^2 = (2/3) n gamma^2 integral |dB|^2 dV over all families.
inline CouplingDensity coupling_density(const FieldMap& map,
                                        double concentration,
                                        const NVParams& nv, int n_psi = 64,
                                        int M_g = 21) {
  validate(map);
  if (!(concentration > 0.0))
    throw validation_error("concentration", "must be positive");
  if (n_psi < 1) throw validation_error("n_psi", "must be >= 1");
  if (M_g < 1) throw validation_error("M_g", "must be >= 1");

  std::vector<double> cpsi(n_psi), spsi(n_psi);
  for (int k = 0; k < n_psi; ++k) {
    const double psi = (k + 0.5) * constants::two_pi / n_psi;
    cpsi[k] = std::cos(psi);
    spsi[k] = std::sin(psi);
  }
  const double w_entry =
      concentration * map.cell_volume / (2.0 * n_psi);

  // entry generator shared by the max scan and the fill pass
  const double sqrt23 = std::sqrt(2.0 / 3.0);
  auto for_each_entry = [&](auto&& fn) {
    for (const auto& p : map.points) {
      const double u_tilt = std::abs(p.Bx - std::sqrt(2.0) * p.By) *
                            nv.gamma_e / std::sqrt(3.0);
      for (int k = 0; k < n_psi; ++k) {
        fn(u_tilt * std::abs(cpsi[k]), false);
        fn(u_tilt * std::abs(spsi[k]), false);
        fn(nv.gamma_e * std::abs(cpsi[k] * p.Bx + sqrt23 * spsi[k] * p.By),
           true);
        fn(nv.gamma_e * std::abs(spsi[k] * p.Bx - sqrt23 * cpsi[k] * p.By),
           true);
      }
    }
  };

  double g_max = 0.0;
  for_each_entry([&](double g, bool) { g_max = std::max(g_max, g); });
  if (!(g_max > 0.0))
    throw numeric_error("field map produces no coupling");

  const double g_lo = 1e-3 * g_max;
  const double log_lo = std::log(g_lo);
  const double inv_dlog = M_g / (std::log(g_max) - log_lo);

  std::vector<double> w(M_g, 0.0), wg2(M_g, 0.0), worth(M_g, 0.0);
  CouplingDensity out;
  out.M_g = M_g;
  for_each_entry([&](double g, bool orth) {
    const double m = w_entry * g * g;
    (orth ? out.orth_coupling_sq : out.non_orth_coupling_sq) += m;
    if (g < g_lo) {
      out.dropped_coupling_sq += m;
      return;
    }
    int idx = static_cast<int>((std::log(g) - log_lo) * inv_dlog);
    idx = std::clamp(idx, 0, M_g - 1);
    w[idx] += w_entry;
    wg2[idx] += m;
    if (orth) worth[idx] += w_entry;
  });

  for (int i = 0; i < M_g; ++i) {
    if (!(w[i] > 0.0)) continue;
    CouplingBin b;
    b.g_m = std::sqrt(wg2[i] / w[i]);
    b.weight = w[i];
    b.weight_orth = worth[i];
    out.bins.push_back(b);
  }
  double sq = 0.0;
  for (const auto& b : out.bins) sq += b.weight * b.g_m * b.g_m;
  out.g_ens = std::sqrt(sq);
  return validate(out), out;
}

// Scales the spin count so the ensemble coupling matches a measured value
// corrected for incomplete polarization: g_target = g_measured / sqrt(p).
inline CouplingDensity rescale_to_measured(CouplingDensity d,
                                           double g_measured,
                                           double polarization) {
  validate(d);
  if (!(g_measured > 0.0))
    throw validation_error("g_measured", "must be positive");
  if (!(polarization > 0.0) || polarization > 1.0)
    throw validation_error("polarization", "must be in (0, 1]");
  const double g_target = g_measured / std::sqrt(polarization);
  const double s = g_target / d.g_ens;
  const double s2 = s * s;
  for (auto& b : d.bins) {
    b.weight *= s2;
    b.weight_orth *= s2;
  }
  d.orth_coupling_sq *= s2;
  d.non_orth_coupling_sq *= s2;
  d.dropped_coupling_sq *= s2;
  d.g_ens = g_target;
  return d;
}

// Crosses the spectral density with the coupling histogram into the flat
// sub-ensemble grid the integrator consumes. Coupling strength and detuning
// are treated as independent; the family mix of the density must already
// match the one the histogram was built from.
inline SubEnsembleGrid build_grid(const FrequencyDensity& rho,
                                  const CouplingDensity& cd,
                                  double omega_s) {
  validate(cd);
  if (!(omega_s > 0.0)) throw validation_error("omega_s", "must be positive");
  double rho_sum = 0.0;
  for (double r : rho.density) rho_sum += r;
  if (!(rho_sum > 0.0))
    throw validation_error("density", "spectral density has no mass");
  double w_sum = 0.0;
  for (const auto& b : cd.bins) w_sum += b.weight;

  SubEnsembleGrid grid;
  grid.omega_s = omega_s;
  grid.M_delta = static_cast<int>(rho.omega_axis.size());
  grid.M_g = static_cast<int>(cd.bins.size());
  grid.bins.reserve(rho.omega_axis.size() * cd.bins.size());
  double sq = 0.0;
  for (std::size_t j = 0; j < rho.omega_axis.size(); ++j) {
    const double p_j = rho.density[j] / rho_sum;
    if (!(p_j > 0.0)) continue;
    for (const auto& cb : cd.bins) {
      GridBin b;
      b.delta_m = rho.omega_axis[j] - omega_s;
      b.g_m = cb.g_m;
      b.N_m = p_j * cb.weight;
      grid.bins.push_back(b);
      sq += b.N_m * b.g_m * b.g_m;
    }
  }
  grid.g_ens = std::sqrt(sq);
  return validate(grid), grid;
}

}  // namespace spinecho
