#pragma once

// Direct Monte-Carlo sampler for the single-defect transition model,
//
//   omega = D + s * sqrt(E^2 + gamma_e^2 (b + c)^2),   s = +-1,
//
// with D Cauchy about the nominal zero-field splitting, b a Cauchy local
// field, E the two-scale exponential strain mixture and c the static axial
// field of the drawn nuclear projection. The quadrature density integrates
// exactly this model, so a histogram of draws is an independent oracle
// for it: any systematic quadrature error shows up against the per-bin
// counting noise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "spinecho/distributions.hpp"
#include "spinecho/spectrum.hpp"
#include "spinecho/types.hpp"

namespace mc {

inline double draw_transition(std::mt19937_64& rng,
                              const spinecho::NVParams& nv,
                              const spinecho::DistributionSpec& ds,
                              double B_NV, double cos_alpha) {
  std::cauchy_distribution<double> dD(nv.D, ds.dD0);
  std::cauchy_distribution<double> db(0.0, ds.db0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> mi(-1, 1);
  std::exponential_distribution<double> e1(1.0 / ds.E1);
  std::exponential_distribution<double> e2(1.0 / ds.E2);

  const double w1 = ds.E1 / (ds.E1 + ds.A1 * ds.E2);
  const double D = dD(rng);
  const double b = db(rng);
  const double E = u01(rng) < w1 ? e1(rng) : e2(rng);
  const int m_I = mi(rng);
  const double u =
      B_NV * cos_alpha + spinecho::hf_sign(m_I) * nv.B_hfs + b;
  const double s = u01(rng) < 0.5 ? -1.0 : 1.0;
  return D + s * std::sqrt(E * E + nv.gamma_e * nv.gamma_e * u * u);
}

struct HistogramCheck {
  std::size_t n_bins = 0;        // coarse bins compared
  std::size_t n_in_axis = 0;     // draws that landed on the axis
  double max_abs_z = 0.0;        // worst per-bin deviation in sigma
  double worst_center = 0.0;     // rad/s, center of that bin
};

// Draws n_samples transitions, histograms the ones inside the axis into
// coarse bins holding at least min_expected counts each, and reports the
// worst normalized deviation from the quadrature prediction. The density
// must be unit-area on its axis; expectations are conditioned on landing
// inside the axis on both sides of the comparison.
inline HistogramCheck compare_histogram(const spinecho::FrequencyDensity& rho,
                                        const spinecho::NVParams& nv,
                                        const spinecho::DistributionSpec& ds,
                                        double B_NV, double cos_alpha,
                                        std::size_t n_samples,
                                        std::uint64_t seed,
                                        double min_expected) {
  const auto& w = rho.omega_axis;
  const std::size_t n = w.size();

  // probability mass of each fine cell [w_j, w_{j+1}]
  std::vector<double> cell(n - 1);
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    cell[j] = 0.5 * (rho.density[j] + rho.density[j + 1]) * (w[j + 1] - w[j]);
    total += cell[j];
  }
  for (double& c : cell) c /= total;

  // merge fine cells into coarse bins of at least min_expected expected draws
  const double p_min = min_expected / static_cast<double>(n_samples);
  std::vector<std::size_t> edges{0};
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < n; ++j) {
    acc += cell[j];
    if (acc >= p_min) {
      edges.push_back(j + 1);
      acc = 0.0;
    }
  }
  if (edges.back() != n - 1) {
    // fold the short trailing run into the last full bin
    if (edges.size() > 1) edges.back() = n - 1;
    else edges.push_back(n - 1);
  }
  const std::size_t n_coarse = edges.size() - 1;
  std::vector<double> expect(n_coarse, 0.0);
  for (std::size_t k = 0; k < n_coarse; ++k)
    for (std::size_t j = edges[k]; j < edges[k + 1]; ++j) expect[k] += cell[j];

  std::mt19937_64 rng(seed);
  std::vector<double> count(n_coarse, 0.0);
  std::size_t n_in = 0;
  const double step = (w.back() - w.front()) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double x = draw_transition(rng, nv, ds, B_NV, cos_alpha);
    if (x < w.front() || x >= w.back()) continue;
    ++n_in;
    const auto j = static_cast<std::size_t>((x - w.front()) / step);
    const auto it =
        std::upper_bound(edges.begin(), edges.end(), j);
    const std::size_t k =
        static_cast<std::size_t>(it - edges.begin()) - 1;
    count[std::min(k, n_coarse - 1)] += 1.0;
  }

  HistogramCheck out;
  out.n_bins = n_coarse;
  out.n_in_axis = n_in;
  const double N = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_coarse; ++k) {
    const double mu = N * expect[k];
    const double sigma = std::sqrt(mu * (1.0 - expect[k]));
    if (!(sigma > 0.0)) continue;
    const double z = std::abs(count[k] - mu) / sigma;
    if (z > out.max_abs_z) {
      out.max_abs_z = z;
      out.worst_center =
          0.5 * (w[edges[k]] + w[edges[k + 1]]);
    }
  }
  return out;
}

}  // namespace mc
