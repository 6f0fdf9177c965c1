#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/linear_response.hpp"
#include "spinecho/types.hpp"

using namespace spinecho;
using Catch::Approx;

namespace {

SubEnsembleGrid tiny_grid() {
  SubEnsembleGrid g;
  g.omega_s = constants::two_pi * 2.88e9;
  g.bins.push_back({-constants::two_pi * 2e6, constants::two_pi * 40.0, 3e5});
  g.bins.push_back({0.0, constants::two_pi * 55.0, 5e5});
  g.bins.push_back({constants::two_pi * 3e6, constants::two_pi * 25.0, 2e5});
  g.g_ens = std::sqrt(grid_coupling_sq(g));
  g.M_delta = 3;
  g.M_g = 1;
  return g;
}

CavityParams tiny_cavity() {
  return cavity_from_Q(constants::two_pi * 2.88e9, 80.0, 0.29, 26.0);
}

}  // namespace

TEST_CASE("ensemble kernel matches the per-bin closed form") {
  const auto grid = tiny_grid();
  const double gp = 1.0 / 5e-6;
  const std::vector<double> probes = {
      grid.omega_s - constants::two_pi * 4e6, grid.omega_s,
      grid.omega_s + constants::two_pi * 1.7e6};

  for (double w : probes) {
    cdouble want = 0.0;
    for (const auto& b : grid.bins)
      want += b.N_m * b.g_m * b.g_m /
              cdouble(w - grid.omega_s - b.delta_m, gp);
    const cdouble got = K_of_omega(grid, gp, w);
    // the branch-free bin update rounds differently from plain division
    CHECK(std::abs(got - want) <= 1e-12 * std::abs(want));
    CHECK(got.imag() < 0.0);  // finite-linewidth kernel always absorbs
  }

  const auto spec = K_of_omega(grid, gp, probes);
  REQUIRE(spec.omega == probes);
  REQUIRE(spec.value.size() == probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i)
    CHECK(spec.value[i] == K_of_omega(grid, gp, probes[i]));
}

TEST_CASE("resonant steady state is suppressed by ensemble absorption") {
  const auto c = tiny_cavity();
  SubEnsembleGrid g;
  g.omega_s = c.omega_c;
  g.bins.push_back({0.0, constants::two_pi * 50.0, 4e5});
  g.g_ens = std::sqrt(grid_coupling_sq(g));
  g.M_delta = g.M_g = 1;

  const double gp = 1.0 / 5e-6;
  const double beta = 2.0e5;
  const cdouble K = K_of_omega(g, gp, c.omega_c);
  // on resonance with the single line, K = -i N g^2 / gamma
  const double rate = g.bins[0].N_m * g.bins[0].g_m * g.bins[0].g_m / gp;
  CHECK(K.real() == Approx(0.0).margin(1e-9 * rate));
  CHECK(K.imag() == Approx(-rate).epsilon(1e-12));

  const cdouble a = steady_state_field(c, K, beta, c.omega_c);
  const double want = std::sqrt(2.0 * c.kappa) * beta / (c.kappa + rate);
  CHECK(a.real() == Approx(want).epsilon(1e-12));
  CHECK(a.imag() == Approx(0.0).margin(1e-12 * want));
  // absorption must damp the field below the empty-cavity value
  CHECK(std::abs(a) < std::sqrt(2.0 * c.kappa) * beta / c.kappa);

  // input-output consistency: r = sqrt(2 kappa) a / beta - 1 must agree
  // with the directly computed reflection at any detuning
  for (double off : {-2.1e6, -0.4e6, 0.8e6, 5.0e6}) {
    const double w = c.omega_c + constants::two_pi * off;
    const cdouble K2 = K_of_omega(g, gp, w);
    const cdouble a2 = steady_state_field(c, K2, beta, w);
    const cdouble r_io = std::sqrt(2.0 * c.kappa) * a2 / beta - 1.0;
    const cdouble r_direct = reflection_coeff(c, K2, w);
    CHECK(std::abs(r_io - r_direct) <= 1e-13);
  }

  CHECK_THROWS_AS(steady_state_field(c, cdouble(0.0, c.kappa), beta,
                                     c.omega_c),
                  numeric_error);
}

TEST_CASE("lossless ensemble keeps the reflection unimodular") {
  const auto c = tiny_cavity();
  const auto grid = tiny_grid();
  // probe between the bins so the gamma = 0 kernel stays finite
  for (int k = -40; k <= 40; ++k) {
    const double w = grid.omega_s + constants::two_pi * (1e5 * k + 5e4);
    const cdouble K = K_of_omega(grid, 0.0, w);
    CHECK(K.imag() == 0.0);
    const cdouble r = reflection_coeff(c, K, w);
    CHECK(std::abs(r) == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("empty-cavity limits of the reflection") {
  const auto c = tiny_cavity();
  for (double off : {-3e6, -0.3e6, 0.0, 1e6, 8e6}) {
    const double w = c.omega_c + constants::two_pi * off;
    const cdouble full = reflection_coeff(c, 0.0, w);
    const cdouble bare = bare_reflection(c, w);
    CHECK(std::abs(full - bare) <= 1e-14);
    CHECK(std::abs(bare) == Approx(1.0).epsilon(1e-14));
  }
  // exactly on resonance the port reflects with unit gain and no phase
  CHECK(bare_reflection(c, c.omega_c).real() == Approx(1.0));
  CHECK(reflection_coeff(c, cdouble(0.0, c.kappa), c.omega_c + c.kappa)
            .imag() != 0.0);
  // det = 0 exactly on resonance, so this kernel zeroes the denominator
  CHECK_THROWS_AS(reflection_coeff(c, cdouble(0.0, c.kappa), c.omega_c),
                  numeric_error);
}

TEST_CASE("susceptibility tracks the kernel") {
  const auto c = tiny_cavity();
  const cdouble K(3.0e5, -4.0e5);
  const cdouble chi = susceptibility(c, K);
  const double scale = constants::two_pi * 0.29 * c.omega_c;
  CHECK(chi.real() == Approx(-3.0e5 / scale).epsilon(1e-12));
  CHECK(chi.imag() == Approx(-4.0e5 / scale).epsilon(1e-12));
}

TEST_CASE("kernel deembedding inverts the reflection model") {
  const auto c = tiny_cavity();
  const auto grid = tiny_grid();
  const double gp = 1.0 / 3e-6;

  std::vector<double> omega;
  for (int k = 0; k <= 200; ++k)
    omega.push_back(c.omega_c + constants::two_pi * (-6e6 + 6e4 * k));

  std::vector<cdouble> K_true(omega.size()), S11(omega.size()),
      S11_sat(omega.size());
  for (std::size_t i = 0; i < omega.size(); ++i) {
    K_true[i] = K_of_omega(grid, gp, omega[i]);
    const cdouble r = reflection_coeff(c, K_true[i], omega[i]);
    // smooth instrument background, cancelled by the ratio
    const cdouble T =
        0.8 * std::polar(1.0, 0.3 + 1e-9 * (omega[i] - c.omega_c));
    S11[i] = T * std::conj(r);
    S11_sat[i] = T * std::conj(bare_reflection(c, omega[i]));
  }

  const auto dk = deembed_K(c, omega, S11, S11_sat);
  REQUIRE(dk.flagged.empty());
  REQUIRE(dk.K.value.size() == omega.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i)
    worst = std::max(worst, std::abs(dk.K.value[i] - K_true[i]) /
                                std::abs(K_true[i]));
  // the inversion cancels terms of order kappa, so machine epsilon on those
  // sets the floor; 1e-9 leaves two decades of headroom above it
  CHECK(worst < 1e-9);

  SECTION("broken points are flagged, not interpolated") {
    auto sat = S11_sat;
    sat[7] = 0.0;
    auto s11 = S11;
    // r = -1 exactly: the one-port inversion loses the kernel there
    s11[13] = -sat[13] * bare_reflection(c, omega[13]);
    const auto bad = deembed_K(c, omega, s11, sat);
    REQUIRE(bad.flagged == std::vector<std::size_t>{7, 13});
    CHECK(bad.K.value[7] == cdouble(0.0, 0.0));
    for (std::size_t i = 0; i < omega.size(); ++i) {
      if (i == 7 || i == 13) continue;
      CHECK(std::abs(bad.K.value[i] - K_true[i]) <=
            1e-9 * std::abs(K_true[i]));
    }
  }

  SECTION("trace length mismatches are rejected") {
    auto shorter = S11;
    shorter.pop_back();
    CHECK_THROWS_AS(deembed_K(c, omega, shorter, S11_sat), validation_error);
  }
}
