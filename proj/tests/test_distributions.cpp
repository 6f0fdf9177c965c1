#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/distributions.hpp"
#include "spinecho/types.hpp"
#include "support/mc_oracle.hpp"

using namespace spinecho;
using Catch::Approx;

namespace {

NVParams reference_nv() {
  return make_nv(constants::two_pi * 2.8775e9, -constants::two_pi * 2.1e6,
                 -constants::two_pi * 5e6);
}

DistributionSpec reference_dist(double d_omega0) {
  DistributionSpec ds;
  ds.db0 = 0.21e-4;  // tesla
  ds.dD0 = constants::two_pi * 150e3;
  ds.E1 = constants::two_pi * 0.5e6;
  ds.E2 = constants::two_pi * 10e6;
  ds.A1 = 0.2;
  ds.d_omega0 = d_omega0;
  return ds;
}

AxisSpec test_axis(double half_MHz, int n) {
  const double D = constants::two_pi * 2.8775e9;
  AxisSpec a;
  a.omega_min = D - constants::two_pi * 1e6 * half_MHz;
  a.omega_max = D + constants::two_pi * 1e6 * half_MHz;
  a.n = n;
  return a;
}

}  // namespace

TEST_CASE("component pdfs integrate to one") {
  // Lorentzian: closed-form CDF comparison on a dense symmetric grid
  const double hwhm = 2.0;
  const double a = 50.0;
  const int n = 200001;
  std::vector<double> x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = -a + 2.0 * a * i / (n - 1);
    y[i] = lorentzian_pdf(x[i], hwhm);
  }
  const double want = 2.0 / constants::pi * std::atan(a / hwhm);
  CHECK(trapezoid(x, y) == Approx(want).epsilon(1e-8));
  CHECK(lorentzian_pdf(0.0, hwhm) ==
        Approx(1.0 / (constants::pi * hwhm)).epsilon(1e-14));

  // strain mixture: unit mass on the half line, peak value (1+A1)/(E1+A1 E2)
  const double E1 = 0.5, E2 = 10.0, A1 = 0.2;
  const int m = 400001;
  std::vector<double> e(m), p(m);
  for (int i = 0; i < m; ++i) {
    e[i] = 60.0 * E2 * i / (m - 1);
    p[i] = biexp_strain_pdf(e[i], E1, E2, A1);
  }
  CHECK(trapezoid(e, p) == Approx(1.0).epsilon(1e-6));
  CHECK(biexp_strain_pdf(0.0, E1, E2, A1) ==
        Approx((1.0 + A1) / (E1 + A1 * E2)).epsilon(1e-14));
  CHECK(biexp_strain_pdf(-1.0, E1, E2, A1) == 0.0);
}

TEST_CASE("axis construction is inclusive and uniform") {
  AxisSpec a;
  a.omega_min = 1.0;
  a.omega_max = 2.0;
  a.n = 5;
  const auto w = make_axis(a);
  REQUIRE(w.size() == 5);
  CHECK(w.front() == 1.0);
  CHECK(w.back() == 2.0);
  CHECK(w[1] == Approx(1.25).epsilon(1e-15));

  a.n = 2;
  CHECK_THROWS_AS(validate(a), validation_error);
  a.n = 5;
  a.omega_max = 1.0;
  CHECK_THROWS_AS(validate(a), validation_error);
}

TEST_CASE("family density is normalized and symmetric at zero field") {
  const auto nv = reference_nv();
  const auto axis = test_axis(15.0, 601);
  const double step = (axis.omega_max - axis.omega_min) / (axis.n - 1);
  const auto ds = reference_dist(step);

  const auto rho = frequency_density(0.0, ds, nv, Family::orth, axis);
  REQUIRE(rho.density.size() == 601);
  CHECK(trapezoid(rho.omega_axis, rho.density) == Approx(1.0).epsilon(1e-12));
  CHECK(rho.raw_mass > 0.0);
  CHECK(rho.raw_mass < 6.0);  // six transitions, tails spill off the axis

  // at B = 0 the nuclear projections mirror each other about D
  for (int i = 0; i < axis.n; ++i)
    CHECK(rho.density[i] ==
          Approx(rho.density[axis.n - 1 - i]).epsilon(1e-9));

  CHECK_THROWS_AS(frequency_density(0.0, ds, nv, Family::combined, axis),
                  validation_error);
}

TEST_CASE("quadrature density matches direct sampling of the model") {
  const auto nv = reference_nv();
  const auto axis = test_axis(17.5, 701);
  const double step = (axis.omega_max - axis.omega_min) / (axis.n - 1);
  const auto ds = reference_dist(step);

  SECTION("orthogonal family at zero applied field") {
    const auto rho = frequency_density(0.0, ds, nv, Family::orth, axis);
    const auto chk = mc::compare_histogram(
        rho, nv, ds, 0.0, std::cos(nv.alpha_family[2]), 200000, 20260822u,
        5000.0);
    INFO("bins " << chk.n_bins << " in-axis " << chk.n_in_axis << " worst z "
                 << chk.max_abs_z << " near "
                 << chk.worst_center / constants::two_pi * 1e-9 << " GHz");
    CHECK(chk.n_bins > 20);
    CHECK(chk.max_abs_z < 3.0);
  }

  SECTION("tilted family in an applied field") {
    const double B = 0.5e-3;
    const auto rho = frequency_density(B, ds, nv, Family::non_orth, axis);
    const auto chk = mc::compare_histogram(
        rho, nv, ds, B, std::cos(nv.alpha_family[0]), 200000, 20260823u,
        5000.0);
    INFO("bins " << chk.n_bins << " in-axis " << chk.n_in_axis << " worst z "
                 << chk.max_abs_z);
    CHECK(chk.n_bins > 20);
    CHECK(chk.max_abs_z < 3.0);
  }
}

TEST_CASE("family combination weights the tilted ensemble by 0.6") {
  const auto nv = reference_nv();
  const auto axis = test_axis(10.0, 301);
  const double step = (axis.omega_max - axis.omega_min) / (axis.n - 1);
  const auto ds = reference_dist(step);

  const auto orth = frequency_density(0.0, ds, nv, Family::orth, axis);
  const auto tilt = frequency_density(0.0, ds, nv, Family::non_orth, axis);
  const auto both = combine_families(orth, tilt);

  CHECK(both.family == Family::combined);
  CHECK(trapezoid(both.omega_axis, both.density) ==
        Approx(1.0).epsilon(1e-12));
  CHECK(both.raw_mass ==
        Approx(orth.raw_mass + 0.6 * tilt.raw_mass).epsilon(1e-12));

  // pointwise: renormalized weighted sum
  std::vector<double> mix(axis.n);
  for (int i = 0; i < axis.n; ++i)
    mix[i] = orth.density[i] + 0.6 * tilt.density[i];
  const double mass = trapezoid(both.omega_axis, mix);
  for (int i = 0; i < axis.n; ++i)
    CHECK(both.density[i] == Approx(mix[i] / mass).epsilon(1e-12));

  // mismatched axes are rejected
  auto axis2 = axis;
  axis2.n = 201;
  const auto other =
      frequency_density(0.0, ds, nv, Family::orth, axis2);
  CHECK_THROWS_AS(combine_families(other, tilt), validation_error);
}
