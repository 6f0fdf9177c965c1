#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "spinecho/spectrum.hpp"
#include "spinecho/types.hpp"

namespace spinecho {

enum class Family { orth, non_orth, combined };

struct AxisSpec {
  double omega_min = 0.0;  // rad/s
  double omega_max = 0.0;  // rad/s
  int n = 0;               // uniform points, inclusive ends
};

inline const AxisSpec& validate(const AxisSpec& a) {
  if (a.n < 3) throw validation_error("axis.n", "need at least 3 points");
  if (!(a.omega_max > a.omega_min))
    throw validation_error("axis", "omega_max must exceed omega_min");
  return a;
}

inline std::vector<double> make_axis(const AxisSpec& a) {
  std::vector<double> w(a.n);
  const double step = (a.omega_max - a.omega_min) / (a.n - 1);
  for (int i = 0; i < a.n; ++i) w[i] = a.omega_min + step * i;
  return w;
}

struct FrequencyDensity {
  std::vector<double> omega_axis;  // rad/s
  std::vector<double> density;     // 1/(rad/s), normalized to unit area
  double B_NV = 0.0;               // tesla
  Family family = Family::combined;
  // Trapezoid mass before normalization; density * raw_mass restores the
  // unnormalized line density (sum over the six transitions).
  double raw_mass = 0.0;
};

inline double lorentzian_pdf(double x, double hwhm) {
  return (hwhm / constants::pi) / (x * x + hwhm * hwhm);
}

inline double biexp_strain_pdf(double E, double E1, double E2, double A1) {
  if (E < 0.0) return 0.0;
  return (std::exp(-E / E1) + A1 * std::exp(-E / E2)) / (E1 + A1 * E2);
}

inline double trapezoid(const std::vector<double>& x,
                        const std::vector<double>& y) {
  double acc = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    acc += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return acc;
}

namespace detail {

// Quadrature nodes in phi for the strain integral over E = s_hi sin(phi),
// phi in [0, pi/2]. Uniform base grid, log-spaced refinement toward phi = 0
// for the fast strain scale, a cluster around the local-field Lorentzian
// resonance where sqrt(s_lo^2 - E^2) = gamma_e|c|, and a cluster at the
// sqrt cusp where E crosses the inner band edge s_lo.
inline void strain_phi_nodes(double s_lo, double s_hi, double E1,
                             double gamma_db0, double gamma_c, double reach,
                             std::vector<double>& nodes) {
  nodes.clear();
  constexpr int n_uniform = 96;
  constexpr double half_pi = constants::pi / 2.0;
  const double h = half_pi / n_uniform;
  for (int k = 0; k <= n_uniform; ++k) nodes.push_back(k * h);
  // Log refinement of the E1 scale near phi = 0.
  double th = std::max(E1 / (30.0 * s_hi), 1e-9);
  while (th < constants::pi / 4.0) {
    nodes.push_back(th);
    th *= 1.15;
  }
  static constexpr double offs[] = {0.0,  0.125, 0.25, 0.375, 0.5, 0.75,
                                    1.0,  1.5,   2.0,  3.0,   4.5, 6.5,
                                    9.0,  13.0,  18.0, 25.0,  35.0, 50.0};
  const auto cluster = [&](double center, double w) {
    for (double o : offs) {
      const double d = o * w;
      if (d > reach * w && o > 0.0) break;
      for (double sgn : {1.0, -1.0}) {
        const double v = center + sgn * d;
        if (v > 0.0 && v < half_pi) nodes.push_back(v);
        if (o == 0.0) break;
      }
    }
  };
  // Inner-edge resonance: the lo atan terms turn over where the inner root
  // crosses |c|.
  if (gamma_c > 0.0 && gamma_c <= s_lo) {
    const double e_star = std::sqrt(s_lo * s_lo - gamma_c * gamma_c);
    const double phi_star = std::asin(std::min(e_star / s_hi, 1.0));
    const double sincos = std::max(std::sin(phi_star), 0.05) *
                          std::max(std::cos(phi_star), 0.02);
    cluster(phi_star, gamma_db0 * gamma_c / (s_hi * s_hi * sincos));
  }
  // Outer-edge knee: the hi atan terms turn over where the outer root
  // crosses |c|; for c = 0 this sits at the endpoint.
  if (gamma_c < s_hi) {
    const double phi_star = std::acos(gamma_c / s_hi);
    cluster(phi_star,
            gamma_db0 / (s_hi * std::max(std::sin(phi_star), 0.05)));
  }
  // Cusp cluster at phi_kink = asin(s_lo / s_hi); the inner root has a
  // square-root kink there. Geometric fractions of the sliver span resolve
  // the upper side; below, the lo knee lives on the db0^2 scale.
  if (s_lo > 0.0 && s_lo < s_hi) {
    const double phi_kink = std::asin(std::min(s_lo / s_hi, 1.0));
    const double span = half_pi - phi_kink;
    nodes.push_back(phi_kink);
    static constexpr double fracs[] = {1e-4, 3e-4, 1e-3, 3e-3, 0.01,
                                       0.03, 0.08, 0.2,  0.45, 0.75};
    for (double f : fracs)
      for (double sgn : {1.0, -1.0}) {
        const double v = phi_kink + sgn * f * span;
        if (v > 0.0 && v < half_pi) nodes.push_back(v);
      }
    const double knee =
        gamma_db0 * gamma_db0 /
        (2.0 * s_lo * s_hi * std::max(std::cos(phi_kink), 1e-6));
    for (double m = 0.25; m <= 1100.0; m *= 2.0) {
      const double v = phi_kink - m * knee;
      if (v <= 0.0) break;
      nodes.push_back(v);
    }
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end(),
                          [](double a, double b) { return b - a < 1e-12; }),
              nodes.end());
}

// Trapezoid over the seed nodes with bounded local refinement: a segment is
// split while its midpoint correction exceeds its width's share of the
// total tolerance. The seeds guarantee narrow structure is seen at all;
// refinement polishes the remaining curvature.
template <class F>
inline double adaptive_trapezoid(F&& f, const std::vector<double>& nodes,
                                 std::vector<double>& vals, double rel_tol,
                                 double abs_tol) {
  vals.resize(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) vals[k] = f(nodes[k]);
  double coarse = 0.0;
  for (std::size_t k = 1; k < nodes.size(); ++k)
    coarse +=
        0.5 * (vals[k] + vals[k - 1]) * (nodes[k] - nodes[k - 1]);
  const double width = nodes.back() - nodes.front();
  const double eps =
      std::max(rel_tol * std::abs(coarse), abs_tol) / width;

  struct Seg {
    double a, b, fa, fb;
    int depth;
  };
  std::vector<Seg> stack;
  stack.reserve(64);
  double acc = 0.0;
  for (std::size_t k = 1; k < nodes.size(); ++k)
    stack.push_back({nodes[k - 1], nodes[k], vals[k - 1], vals[k], 0});
  while (!stack.empty()) {
    const Seg s = stack.back();
    stack.pop_back();
    const double m = 0.5 * (s.a + s.b);
    const double fm = f(m);
    const double t1 = 0.5 * (s.fa + s.fb) * (s.b - s.a);
    const double t2 = 0.5 * (s.fa + fm) * (m - s.a) +
                      0.5 * (fm + s.fb) * (s.b - m);
    // The Richardson-corrected value is accurate well past the raw
    // midpoint gap, so the gap may exceed the budget by a safe factor.
    if (std::abs(t2 - t1) <= 8.0 * eps * (s.b - s.a) || s.depth >= 18) {
      acc += t2 + (t2 - t1) / 3.0;
    } else {
      stack.push_back({s.a, m, s.fa, fm, s.depth + 1});
      stack.push_back({m, s.b, fm, s.fb, s.depth + 1});
    }
  }
  return acc;
}

// Probability mass of one branch of one nuclear projection in the split
// band [s_lo, s_hi]: the strain integral of the exact Cauchy interval mass
// of the local field. At fixed strain E the band maps to
// |b + c| in [lo, hi] with lo = sqrt(max(s_lo^2 - E^2, 0))/gamma_e and
// hi = sqrt(s_hi^2 - E^2)/gamma_e; the two sign choices of b + c give the
// two atan differences. c is the static part of the effective axial field.
inline double split_band_mass(double s_lo, double s_hi, double c,
                              const DistributionSpec& ds, const NVParams& nv,
                              std::vector<double>& nodes,
                              std::vector<double>& vals) {
  const double g = nv.gamma_e;
  strain_phi_nodes(s_lo, s_hi, ds.E1, g * ds.db0, g * std::abs(c),
                   10.0 * ds.truncation_widths, nodes);
  const auto integrand = [&](double phi) {
    const double E = s_hi * std::sin(phi);
    const double cs = std::cos(phi);
    const double hi = s_hi * cs / g;
    const double m2 = s_lo * s_lo - E * E;
    const double lo = m2 > 0.0 ? std::sqrt(m2) / g : 0.0;
    const double mass_b =
        (std::atan((hi - c) / ds.db0) - std::atan((lo - c) / ds.db0) +
         std::atan((hi + c) / ds.db0) - std::atan((lo + c) / ds.db0)) /
        constants::pi;
    // dE = s_hi cos(phi) dphi
    return s_hi * cs * biexp_strain_pdf(E, ds.E1, ds.E2, ds.A1) * mass_b;
  };
  // The absolute floor is in band-mass units; the per-branch total is one,
  // so tail bands stop refining once they are negligible against it.
  return adaptive_trapezoid(integrand, nodes, vals, 1e-5, 1e-9);
}

}  // namespace detail

// Normalized transition-frequency density at applied field B_NV for one
// spin family. The local-field and strain averages are evaluated as exact
// band masses over [x - step/2, x + step/2) per split x = omega - D; the D
// inhomogeneity then enters as an exact convolution with the bin-integrated
// Cauchy kernel, which keeps the full Lorentzian mass (no cutoff in D).
inline FrequencyDensity frequency_density(double B_NV,
                                          const DistributionSpec& ds,
                                          const NVParams& nv, Family family,
                                          const AxisSpec& axis) {
  validate(ds);
  validate(nv);
  validate(axis);
  if (family == Family::combined)
    throw validation_error("family", "compute per family, then combine");
  const double cos_alpha =
      std::cos(family == Family::orth ? nv.alpha_family[2]
                                      : nv.alpha_family[0]);

  FrequencyDensity out;
  out.omega_axis = make_axis(axis);
  out.B_NV = B_NV;
  out.family = family;
  const int n = axis.n;
  const double step = (axis.omega_max - axis.omega_min) / (n - 1);

  // Split grid extends past the axis by the reach of the D kernel.
  const int pad = static_cast<int>(
      std::min(20000.0, std::ceil(150.0 * ds.dD0 / step)));
  const int nx = n + 2 * pad;
  const double x0 = axis.omega_min - nv.D - pad * step;

  std::vector<double> G(nx, 0.0);
  std::vector<double> nodes, vals;
  const double half = 0.5 * step;
  for (int m_I = -1; m_I <= 1; ++m_I) {
    const double c = B_NV * cos_alpha + hf_sign(m_I) * nv.B_hfs;
    for (int j = 0; j < nx; ++j) {
      const double ax = std::abs(x0 + j * step);
      // Branch matching the sign of x; near x = 0 the other branch spills
      // into the same band.
      double m = detail::split_band_mass(std::max(ax - half, 0.0), ax + half,
                                         c, ds, nv, nodes, vals);
      if (ax < half)
        m += detail::split_band_mass(0.0, half - ax, c, ds, nv, nodes, vals);
      G[j] += m / step;
    }
  }

  // Bin-integrated Cauchy weights; Toeplitz in (i - j).
  const int nk = n + nx;
  std::vector<double> kernel(nk);
  for (int d = 0; d < nk; ++d) {
    const double center = (d - (nx - 1) + pad) * step;
    kernel[d] = (std::atan((center + 0.5 * step) / ds.dD0) -
                 std::atan((center - 0.5 * step) / ds.dD0)) /
                constants::pi;
  }

  out.density.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    // kernel index for (i, j) is i - j + (nx - 1).
    double acc = 0.0;
    const double* kbase = kernel.data() + i + (nx - 1);
    for (int j = 0; j < nx; ++j) acc += G[j] * kbase[-j];
    out.density[i] = acc;
  }

  out.raw_mass = trapezoid(out.omega_axis, out.density);
  if (!(out.raw_mass > 0.0))
    throw numeric_error("frequency_density: zero mass on the axis");
  for (double& v : out.density) v /= out.raw_mass;
  return out;
}

// Weighted total over the two families: the non-orthogonal one enters with
// relative weight 0.6 (its smaller ensemble coupling), then the result is
// renormalized on the shared axis.
inline FrequencyDensity combine_families(const FrequencyDensity& orth,
                                         const FrequencyDensity& non_orth) {
  if (orth.omega_axis.size() != non_orth.omega_axis.size())
    throw validation_error("omega_axis", "family axes differ");
  for (std::size_t i = 0; i < orth.omega_axis.size(); ++i)
    if (orth.omega_axis[i] != non_orth.omega_axis[i])
      throw validation_error("omega_axis", "family axes differ");
  FrequencyDensity out;
  out.omega_axis = orth.omega_axis;
  out.B_NV = orth.B_NV;
  out.family = Family::combined;
  out.density.resize(orth.density.size());
  for (std::size_t i = 0; i < out.density.size(); ++i)
    out.density[i] = orth.density[i] + 0.6 * non_orth.density[i];
  const double mass = trapezoid(out.omega_axis, out.density);
  for (double& v : out.density) v /= mass;
  out.raw_mass = orth.raw_mass + 0.6 * non_orth.raw_mass;
  return out;
}

}  // namespace spinecho
