#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/dynamics.hpp"
#include "spinecho/linear_response.hpp"
#include "spinecho/parallel.hpp"
#include "spinecho/types.hpp"

using namespace spinecho;
using Catch::Approx;

namespace {

CavityParams test_cavity(double detune_from_spins = 0.0) {
  auto c = cavity_from_Q(constants::two_pi * 2.88e9, 80.0, 0.29, 26.0);
  c.omega_c += detune_from_spins;
  c.quality_factor = c.omega_c / (2.0 * c.kappa);
  return c;
}

SubEnsembleGrid empty_spin_grid() {
  SubEnsembleGrid g;
  g.omega_s = constants::two_pi * 2.88e9;
  g.bins.push_back({0.0, 0.0, 0.0});
  g.M_delta = g.M_g = 1;
  return g;
}

SubEnsembleGrid small_grid(double g_scale, double N_scale) {
  SubEnsembleGrid g;
  g.omega_s = constants::two_pi * 2.88e9;
  g.bins.push_back({-constants::two_pi * 2e6, 0.8 * g_scale, N_scale});
  g.bins.push_back({0.0, g_scale, 2.0 * N_scale});
  g.bins.push_back({constants::two_pi * 1.2e6, 1.1 * g_scale, N_scale});
  g.g_ens = std::sqrt(grid_coupling_sq(g));
  g.M_delta = 3;
  g.M_g = 1;
  return g;
}

DriveWaveform constant_drive(double beta, double duration, double ramp = 0.0) {
  DriveWaveform w;
  w.segments.push_back({0.0, duration, beta, 0.0, 0.0, ramp});
  return w;
}

// classic RK4 step built on the reference derivative, for pinning the
// fused integrator to it
SystemState axpy(const SystemState& s, double h, const SystemState& d) {
  SystemState r = s;
  r.t = s.t + h * d.t;
  r.X_c += h * d.X_c;
  r.P_c += h * d.P_c;
  for (std::size_t i = 0; i < s.S_x.size(); ++i) {
    r.S_x[i] += h * d.S_x[i];
    r.S_y[i] += h * d.S_y[i];
    r.S_z[i] += h * d.S_z[i];
  }
  return r;
}

SystemState reference_rk4_step(const SubEnsembleGrid& grid,
                               const CavityParams& cavity,
                               const DriveWaveform& drive,
                               const DecoherenceSpec& dec,
                               const SystemState& s, double dt,
                               double polarization) {
  double bR, bI;
  auto eval = [&](const SystemState& st, double t) {
    drive_value(drive, t, bR, bI);
    return rhs(grid, cavity, dec, st, bR, bI, polarization);
  };
  const auto k1 = eval(s, s.t);
  const auto k2 = eval(axpy(s, 0.5 * dt, k1), s.t + 0.5 * dt);
  const auto k3 = eval(axpy(s, 0.5 * dt, k2), s.t + 0.5 * dt);
  const auto k4 = eval(axpy(s, dt, k3), s.t + dt);
  SystemState r = axpy(s, dt / 6.0, k1);
  r = axpy(r, dt / 3.0, k2);
  r = axpy(r, dt / 3.0, k3);
  r = axpy(r, dt / 6.0, k4);
  r.t = s.t + dt;
  return r;
}

}  // namespace

TEST_CASE("initial state is the polarized ground state") {
  const auto grid = small_grid(constants::two_pi * 50.0, 1e5);
  const auto s = init_state(grid, 0.8);
  REQUIRE(s.S_z.size() == 3);
  CHECK(s.t == 0.0);
  CHECK(s.X_c == 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s.S_x[i] == 0.0);
    CHECK(s.S_y[i] == 0.0);
    CHECK(s.S_z[i] == Approx(-0.8 * grid.bins[i].N_m));
  }
  CHECK_THROWS_AS(init_state(grid, 0.0), validation_error);
  CHECK_THROWS_AS(init_state(grid, 1.5), validation_error);
}

TEST_CASE("step size tracks the fastest rate in the frame") {
  auto grid = small_grid(constants::two_pi * 50.0, 1e5);
  const auto c = test_cavity();
  // cavity linewidth dominates this configuration
  CHECK(stable_dt(grid, c) == Approx(0.1 / c.kappa));
  CHECK(stable_dt(grid, c, 0.02) == Approx(0.02 / c.kappa));

  // a far-detuned bin takes over
  grid.bins.push_back({30.0 * c.kappa, 0.0, 0.0});
  grid.g_ens = std::sqrt(grid_coupling_sq(grid));
  CHECK(stable_dt(grid, c) == Approx(0.1 / (30.0 * c.kappa)));
  grid.bins.pop_back();
  grid.g_ens = std::sqrt(grid_coupling_sq(grid));

  // ... or a shifted cavity
  const auto far = test_cavity(50.0 * c.kappa);
  CHECK(stable_dt(grid, far) ==
        Approx(0.1 / std::abs(far.omega_c - grid.omega_s)));

  // ... or a detuned drive tone
  DriveWaveform w;
  w.segments.push_back({0.0, 1e-6, 1.0, 0.0, 200.0 * c.kappa, 0.0});
  CHECK(stable_dt(grid, c, 0.1, &w) == Approx(0.1 / (200.0 * c.kappa)));

  // ... or a strong ensemble coupling
  auto strong = small_grid(constants::two_pi * 50.0, 1e5);
  strong.g_ens = 5.0 * c.kappa;
  CHECK(stable_dt(strong, c) == Approx(0.1 / strong.g_ens));

  CHECK_THROWS_AS(stable_dt(grid, c, 0.0), validation_error);
  CHECK_THROWS_AS(stable_dt(grid, c, 1.5), validation_error);
}

TEST_CASE("empty cavity charges at the analytic rate") {
  const auto c = test_cavity();
  const auto grid = empty_spin_grid();
  const double beta = 1e3;
  const auto drive = constant_drive(beta, 1e-6);
  DecoherenceSpec dec;

  // resonant charging: X(t) = X_ss (1 - exp(-kappa t)), P = 0
  const double x_ss = 2.0 * beta / std::sqrt(c.kappa);

  auto final_x = [&](double dt, double t_end) {
    IntegratorSpec spec;
    spec.dt = dt;
    spec.t_end = t_end;
    const auto tr = integrate(grid, c, drive, dec, spec, 1.0);
    REQUIRE(tr.t.back() == Approx(t_end));
    CHECK(std::abs(tr.P_c.back()) <= 1e-12 * std::abs(tr.X_c.back()));
    return tr.X_c.back();
  };

  const double t_end = 20e-9;
  const double want = x_ss * (1.0 - std::exp(-c.kappa * t_end));
  const double err1 = std::abs(final_x(1e-9, t_end) - want);
  const double err2 = std::abs(final_x(0.5e-9, t_end) - want);
  CHECK(err1 / std::abs(want) < 1e-5);
  // fourth-order convergence: halving dt divides the error by ~16
  CHECK(err1 / err2 > 10.0);
  CHECK(err1 / err2 < 24.0);

  SECTION("steady reflection is lossless") {
    IntegratorSpec spec;
    spec.t_end = 150e-9;
    const auto tr = integrate(grid, c, drive, dec, spec, 1.0);
    CHECK(tr.aR_I.back() == Approx(beta).epsilon(1e-6));
    CHECK(tr.aR_Q.back() == Approx(0.0).margin(1e-6 * beta));
  }
}

TEST_CASE("fused integrator reproduces the reference derivative") {
  const auto c = test_cavity(constants::two_pi * 0.9e6);
  const auto grid = small_grid(constants::two_pi * 2e3, 1e4);
  const auto drive = constant_drive(500.0, 1e-6);
  DecoherenceSpec dec;
  dec.gamma_perp = 2e5;
  dec.gamma_par = 5e4;
  const double pol = 0.9;
  const double dt = stable_dt(grid, c);

  // five fused steps against five reference steps
  auto s = init_state(grid, pol);
  for (int n = 0; n < 5; ++n)
    s = reference_rk4_step(grid, c, drive, dec, s, dt, pol);

  IntegratorSpec spec;
  spec.dt = dt;
  spec.t_end = 5.0 * dt;
  spec.snapshot_times = {5.0 * dt};
  const auto tr = integrate(grid, c, drive, dec, spec, pol);
  REQUIRE(tr.snapshots.size() == 1);
  const auto& st = tr.snapshots[0].second;

  CHECK(st.X_c == Approx(s.X_c).epsilon(1e-12));
  CHECK(st.P_c == Approx(s.P_c).epsilon(1e-12));
  const double s_scale = pol * grid.bins[1].N_m;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(st.S_x[i] == Approx(s.S_x[i]).margin(1e-12 * s_scale));
    CHECK(st.S_y[i] == Approx(s.S_y[i]).margin(1e-12 * s_scale));
    CHECK(st.S_z[i] == Approx(s.S_z[i]).margin(1e-12 * s_scale));
  }
}

TEST_CASE("driven ensemble relaxes to the linear-response steady state") {
  const auto c = test_cavity(constants::two_pi * 1.5e6);
  const auto grid = small_grid(constants::two_pi * 50.0, 4e5);
  const double gp = 1.0 / 0.5e-6;
  const double beta = 100.0;

  DecoherenceSpec dec;
  dec.gamma_perp = gp;
  IntegratorSpec spec;
  spec.t_end = 8e-6;
  const auto drive = constant_drive(beta, spec.t_end + 1e-6);
  const auto tr = integrate(grid, c, drive, dec, spec, 1.0);

  const std::complex<double> a_num(tr.X_c.back() / std::sqrt(2.0),
                                   tr.P_c.back() / std::sqrt(2.0));
  const auto K = K_of_omega(grid, gp, grid.omega_s);
  const auto a_ss = steady_state_field(c, K, beta, grid.omega_s);
  CHECK(std::abs(a_num - a_ss) <= 1e-6 * std::abs(a_ss));
}

TEST_CASE("undamped spins keep their length through drive and precession") {
  const auto c = test_cavity();
  SubEnsembleGrid grid;
  grid.omega_s = c.omega_c;
  for (int k = 0; k < 64; ++k) {
    const double f = -1e6 + 2e6 * (k + 0.5) / 64.0;
    grid.bins.push_back({constants::two_pi * f, constants::two_pi * 2e3,
                         1e3 * (1.0 + 0.3 * std::sin(0.7 * k))});
  }
  grid.g_ens = std::sqrt(grid_coupling_sq(grid));
  grid.M_delta = 64;
  grid.M_g = 1;

  DriveWaveform w;
  w.segments.push_back({0.1e-6, 0.3e-6, 1e6, 0.0, 0.0, 10e-9});
  DecoherenceSpec dec;  // gamma_perp = gamma_par = 0

  IntegratorSpec spec;
  spec.t_end = 2e-6;
  spec.snapshot_times = {2e-6};
  const auto tr = integrate(grid, c, w, dec, spec, 1.0);
  REQUIRE(tr.snapshots.size() == 1);
  const auto& st = tr.snapshots[0].second;

  double worst = 0.0;
  double tipped = 0.0;
  for (std::size_t i = 0; i < grid.bins.size(); ++i) {
    const double n0 = grid.bins[i].N_m;
    const double norm = std::sqrt(st.S_x[i] * st.S_x[i] +
                                  st.S_y[i] * st.S_y[i] +
                                  st.S_z[i] * st.S_z[i]);
    worst = std::max(worst, std::abs(norm / n0 - 1.0));
    tipped = std::max(tipped, std::hypot(st.S_x[i], st.S_y[i]) / n0);
  }
  CHECK(worst < 1e-9);
  CHECK(tipped > 0.1);  // the pulse really moved the spins
}

TEST_CASE("results do not depend on the worker count") {
  const auto c = test_cavity();
  SubEnsembleGrid grid;
  grid.omega_s = c.omega_c;
  const int m = 9000;  // two chunks
  for (int k = 0; k < m; ++k) {
    const double f = -2e6 + 4e6 * (k + 0.5) / m;
    grid.bins.push_back({constants::two_pi * f, constants::two_pi * 30.0,
                         1e2 * (1.0 + 0.2 * std::cos(1.3 * k))});
  }
  grid.g_ens = std::sqrt(grid_coupling_sq(grid));
  grid.M_delta = m;
  grid.M_g = 1;

  const auto drive = constant_drive(1e4, 1e-6, 10e-9);
  DecoherenceSpec dec;
  dec.gamma_perp = 1e5;
  IntegratorSpec spec;
  spec.t_end = 0.2e-6;
  spec.snapshot_times = {0.2e-6};

  const auto serial = integrate(grid, c, drive, dec, spec, 1.0);
  WorkerPool pool(4);
  REQUIRE(pool.size() == 4);
  const auto threaded = integrate(grid, c, drive, dec, spec, 1.0, &pool);

  REQUIRE(serial.t == threaded.t);
  CHECK(serial.X_c == threaded.X_c);
  CHECK(serial.P_c == threaded.P_c);
  CHECK(serial.aR_I == threaded.aR_I);
  CHECK(serial.aR_Q == threaded.aR_Q);
  REQUIRE(threaded.snapshots.size() == 1);
  CHECK(serial.snapshots[0].second.S_x == threaded.snapshots[0].second.S_x);
  CHECK(serial.snapshots[0].second.S_y == threaded.snapshots[0].second.S_y);
  CHECK(serial.snapshots[0].second.S_z == threaded.snapshots[0].second.S_z);
}

TEST_CASE("two-component decay mixes the legs by weight") {
  const auto c = test_cavity();
  const auto grid = small_grid(constants::two_pi * 100.0, 1e5);
  const auto drive = constant_drive(1e4, 0.3e-6, 10e-9);
  BiexpSpec biexp{2e-6, 8e-6, 0.7, 0.3};
  IntegratorSpec spec;
  spec.t_end = 1e-6;

  const auto r =
      bi_t2_run(grid, c, drive, biexp, 0.0, spec, 1.0, 0.4e-6, 0.9e-6);
  CHECK(r.weight_A == 0.7);
  CHECK(r.weight_B == 0.3);
  REQUIRE(r.combined.t == r.trace_A.t);

  double mism = 0.0, field = 0.0;
  for (std::size_t i = 0; i < r.combined.t.size(); ++i) {
    CHECK(r.combined.aR_I[i] ==
          0.7 * r.trace_A.aR_I[i] + 0.3 * r.trace_B.aR_I[i]);
    CHECK(r.combined.X_c[i] ==
          0.7 * r.trace_A.X_c[i] + 0.3 * r.trace_B.X_c[i]);
    const double t = r.combined.t[i];
    if (t >= 0.4e-6 && t <= 0.9e-6) {
      const double fa = std::hypot(r.trace_A.X_c[i], r.trace_A.P_c[i]) /
                        std::sqrt(2.0);
      const double fb = std::hypot(r.trace_B.X_c[i], r.trace_B.P_c[i]) /
                        std::sqrt(2.0);
      field = std::max({field, fa, fb});
      mism = std::max(mism, std::hypot(r.trace_A.X_c[i] - r.trace_B.X_c[i],
                                       r.trace_A.P_c[i] - r.trace_B.P_c[i]) /
                                std::sqrt(2.0));
    }
  }
  CHECK(r.max_field == field);
  CHECK(r.max_field_mismatch == mism);
  CHECK(r.max_field > 0.0);
  // the faster-decaying leg must differ from the slower one somewhere
  CHECK(r.max_field_mismatch > 0.0);
}

TEST_CASE("recording stride and snapshot alignment") {
  const auto c = test_cavity();
  const auto grid = empty_spin_grid();
  const auto drive = constant_drive(1e3, 1e-6);
  DecoherenceSpec dec;

  IntegratorSpec spec;
  spec.dt = 1e-9;
  spec.t_end = 100e-9;
  spec.store_stride = 7;
  // off-edge requests snap forward to the next step boundary
  spec.snapshot_times = {0.0, 0.35e-9, 3e-9, 98.6e-9};
  const auto tr = integrate(grid, c, drive, dec, spec, 1.0);

  // records at t = 0, every 7th step, and the final step
  REQUIRE(tr.t.size() == 16);
  CHECK(tr.t[0] == 0.0);
  CHECK(tr.t[1] == Approx(7e-9));
  CHECK(tr.t[14] == Approx(98e-9));
  CHECK(tr.t[15] == Approx(100e-9));
  CHECK(tr.store_stride == 7);
  CHECK(tr.dt == 1e-9);

  REQUIRE(tr.snapshots.size() == 4);
  CHECK(tr.snapshots[0].first == 0.0);
  CHECK(tr.snapshots[1].first == Approx(1e-9));
  CHECK(tr.snapshots[2].first == Approx(3e-9));
  CHECK(tr.snapshots[3].first == Approx(99e-9));
  // the t = 0 snapshot is the untouched ground state
  CHECK(tr.snapshots[0].second.X_c == 0.0);
  CHECK(tr.snapshots[0].second.S_z[0] == 0.0);  // empty grid bin has N = 0

  SECTION("invalid specs are rejected") {
    IntegratorSpec bad;
    bad.t_end = 0.0;
    CHECK_THROWS_AS(integrate(grid, c, drive, dec, bad, 1.0),
                    validation_error);
    bad.t_end = 1e-7;
    bad.store_stride = 0;
    CHECK_THROWS_AS(integrate(grid, c, drive, dec, bad, 1.0),
                    validation_error);
  }
}
