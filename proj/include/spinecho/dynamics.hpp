#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "spinecho/parallel.hpp"
#include "spinecho/types.hpp"

namespace spinecho {

// Ground-state ensemble with the cavity empty: S_z = -N p', transverse
// components and cavity quadratures zero.
inline SystemState init_state(const SubEnsembleGrid& grid,
                              double polarization) {
  if (!(polarization > 0.0) || polarization > 1.0)
    throw validation_error("polarization", "must be in (0, 1]");
  SystemState s;
  s.t = 0.0;
  const std::size_t m = grid.bins.size();
  s.S_x.assign(m, 0.0);
  s.S_y.assign(m, 0.0);
  s.S_z.resize(m);
  for (std::size_t i = 0; i < m; ++i)
    s.S_z[i] = -polarization * grid.bins[i].N_m;
  return s;
}

// Conservative explicit step for the fastest rotation in the frame.
inline double stable_dt(const SubEnsembleGrid& grid,
                        const CavityParams& cavity, double safety = 0.1,
                        const DriveWaveform* drive = nullptr) {
  if (!(safety > 0.0) || safety > 1.0)
    throw validation_error("safety", "must be in (0, 1]");
  double rate = cavity.kappa;
  rate = std::max(rate, std::abs(cavity.omega_c - grid.omega_s));
  for (const auto& b : grid.bins)
    rate = std::max(rate, std::abs(b.delta_m));
  rate = std::max(rate, grid.g_ens);
  if (drive)
    for (const auto& seg : drive->segments)
      rate = std::max(rate, std::abs(seg.detuning));
  return safety / rate;
}

// Reference derivative of the coupled cavity-spin system in the rotating
// frame, with the drive quadratures already evaluated at the state's time.
// Spin equations carry sqrt(2) g, the cavity sums g/sqrt(2); together with
// S_z = -N this reproduces the linear kernel K = sum N g^2/(w - w_m + i gp).
// The integrator below inlines the same algebra; tests hold them together.
inline SystemState rhs(const SubEnsembleGrid& grid, const CavityParams& cavity,
                       const DecoherenceSpec& dec, const SystemState& s,
                       double beta_R, double beta_I,
                       double polarization = 1.0) {
  validate(s, grid);
  const double dcs = cavity.omega_c - grid.omega_s;
  const double gp = dec.gamma_perp, gpar = dec.gamma_par;
  const double sqrt2 = std::sqrt(2.0);
  const std::size_t m = grid.bins.size();
  SystemState d;
  d.t = 1.0;
  d.S_x.resize(m);
  d.S_y.resize(m);
  d.S_z.resize(m);
  double sum_x = 0.0, sum_y = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& b = grid.bins[i];
    const double c = sqrt2 * b.g_m;
    const double szeq = -polarization * b.N_m;
    sum_x += b.g_m / sqrt2 * s.S_x[i];
    sum_y += b.g_m / sqrt2 * s.S_y[i];
    d.S_x[i] = -b.delta_m * s.S_y[i] - gp * s.S_x[i] - c * s.S_z[i] * s.P_c;
    d.S_y[i] = b.delta_m * s.S_x[i] - gp * s.S_y[i] - c * s.S_z[i] * s.X_c;
    d.S_z[i] = c * (s.X_c * s.S_y[i] + s.P_c * s.S_x[i]) -
               gpar * (s.S_z[i] - szeq);
  }
  const double two_sqrt_k = 2.0 * std::sqrt(cavity.kappa);
  d.X_c = -cavity.kappa * s.X_c + dcs * s.P_c - sum_y + two_sqrt_k * beta_R;
  d.P_c = -cavity.kappa * s.P_c - dcs * s.X_c - sum_x + two_sqrt_k * beta_I;
  return d;
}

struct IntegratorSpec {
  double dt = 0.0;  // 0 -> stable_dt(grid, cavity, safety, drive)
  double safety = 0.1;
  double t_end = 0.0;
  std::vector<double> snapshot_times;  // each snaps to the next step edge
  int store_stride = 1;
};

struct TimeTrace {
  double dt = 0.0;
  int store_stride = 1;
  std::vector<double> t;
  std::vector<double> X_c, P_c;    // intracavity quadratures
  std::vector<double> aR_I, aR_Q;  // reflected output field quadratures
  std::vector<std::pair<double, SystemState>> snapshots;
};

namespace detail {
constexpr std::size_t kChunk = 8192;
}

// Fixed-step RK4 over the full bin set. The three bin sweeps per step each
// fold two stages together where the data allows it, and the last sweep
// also applies the state update and collects the sums the next step's
// first stage needs. Partial sums live in per-chunk slots and are combined
// in chunk order, so results do not depend on the worker count.
inline TimeTrace integrate(const SubEnsembleGrid& grid,
                           const CavityParams& cavity,
                           const DriveWaveform& drive,
                           const DecoherenceSpec& dec,
                           const IntegratorSpec& spec, double polarization,
                           WorkerPool* pool = nullptr) {
  validate(grid);
  validate(drive);
  validate(dec);
  if (!(spec.t_end > 0.0)) throw validation_error("t_end", "must be positive");
  if (spec.store_stride < 1)
    throw validation_error("store_stride", "must be >= 1");

  const double dt =
      spec.dt > 0.0 ? spec.dt : stable_dt(grid, cavity, spec.safety, &drive);
  const long n_steps = static_cast<long>(std::ceil(spec.t_end / dt - 1e-9));
  const std::size_t m = grid.bins.size();

  // state and constants, struct-of-arrays
  std::vector<double> sx(m, 0.0), sy(m, 0.0), sz(m), kx(m), ky(m), kz(m),
      ax(m), ay(m), az(m), del(m), cg(m), szeq(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& b = grid.bins[i];
    del[i] = b.delta_m;
    cg[i] = std::sqrt(2.0) * b.g_m;
    szeq[i] = -polarization * b.N_m;
    sz[i] = szeq[i];
  }

  const double dcs = cavity.omega_c - grid.omega_s;
  const double kap = cavity.kappa;
  const double two_sqrt_k = 2.0 * std::sqrt(kap);
  const double sqrt_k = std::sqrt(kap);
  const double gp = dec.gamma_perp, gpar = dec.gamma_par;
  const double hdt = 0.5 * dt, d6 = dt / 6.0, d3 = dt / 3.0;

  const std::size_t n_chunks = (m + detail::kChunk - 1) / detail::kChunk;
  std::vector<double> p1(n_chunks), p2(n_chunks), p3(n_chunks), p4(n_chunks);
  const bool threaded = pool && pool->size() > 1 && n_chunks > 1;
  auto sweep = [&](const std::function<void(std::size_t, std::size_t, int)>& body) {
    if (threaded) {
      pool->run(static_cast<int>(n_chunks), [&](int c) {
        const std::size_t lo = static_cast<std::size_t>(c) * detail::kChunk;
        body(lo, std::min(m, lo + detail::kChunk), c);
      });
    } else {
      for (std::size_t c = 0; c < n_chunks; ++c) {
        const std::size_t lo = c * detail::kChunk;
        body(lo, std::min(m, lo + detail::kChunk), static_cast<int>(c));
      }
    }
  };
  auto combine = [&](const std::vector<double>& p) {
    double acc = 0.0;
    for (double v : p) acc += v;
    return acc;
  };

  double X = 0.0, P = 0.0, t = 0.0;

  // sums of c*S at the current state, maintained across steps by sweep C
  double S1x = 0.0, S1y = 0.0;

  TimeTrace trace;
  trace.dt = dt;
  trace.store_stride = spec.store_stride;
  const std::size_t n_samples =
      static_cast<std::size_t>(n_steps / spec.store_stride) + 2;
  trace.t.reserve(n_samples);
  trace.X_c.reserve(n_samples);
  trace.P_c.reserve(n_samples);
  trace.aR_I.reserve(n_samples);
  trace.aR_Q.reserve(n_samples);

  std::vector<double> snaps = spec.snapshot_times;
  std::sort(snaps.begin(), snaps.end());
  std::size_t next_snap = 0;

  auto record = [&](double tn) {
    double bR = 0.0, bI = 0.0;
    drive_value(drive, tn, bR, bI);
    trace.t.push_back(tn);
    trace.X_c.push_back(X);
    trace.P_c.push_back(P);
    trace.aR_I.push_back(sqrt_k * X - bR);
    trace.aR_Q.push_back(sqrt_k * P - bI);
  };
  auto snapshot = [&](double tn) {
    while (next_snap < snaps.size() && snaps[next_snap] <= tn + 1e-12 * dt) {
      SystemState st;
      st.t = tn;
      st.X_c = X;
      st.P_c = P;
      st.S_x.assign(sx.begin(), sx.end());
      st.S_y.assign(sy.begin(), sy.end());
      st.S_z.assign(sz.begin(), sz.end());
      trace.snapshots.emplace_back(tn, std::move(st));
      ++next_snap;
    }
  };

  record(0.0);
  snapshot(0.0);

  for (long n = 0; n < n_steps; ++n) {
    t = n * dt;
    double b1R, b1I, b2R, b2I, b4R, b4I;
    drive_value(drive, t, b1R, b1I);
    drive_value(drive, t + hdt, b2R, b2I);
    drive_value(drive, t + dt, b4R, b4I);

    // the sweeps accumulate sqrt(2) g S; the cavity couples via g/sqrt(2)
    const double k1X = -kap * X + dcs * P - 0.5 * S1y + two_sqrt_k * b1R;
    const double k1P = -kap * P - dcs * X - 0.5 * S1x + two_sqrt_k * b1I;
    const double X2 = X + hdt * k1X, P2 = P + hdt * k1P;

    // sweep A: stages 1 and 2 per bin, sums of stage-2 values
    sweep([&](std::size_t lo, std::size_t hi, int c) {
      double qx = 0.0, qy = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        const double d = del[i], cgi = cg[i];
        const double x1 = -d * sy[i] - gp * sx[i] - cgi * sz[i] * P;
        const double y1 = d * sx[i] - gp * sy[i] - cgi * sz[i] * X;
        const double z1 = cgi * (X * sy[i] + P * sx[i]) -
                          gpar * (sz[i] - szeq[i]);
        const double sx2 = sx[i] + hdt * x1;
        const double sy2 = sy[i] + hdt * y1;
        const double sz2 = sz[i] + hdt * z1;
        const double x2 = -d * sy2 - gp * sx2 - cgi * sz2 * P2;
        const double y2 = d * sx2 - gp * sy2 - cgi * sz2 * X2;
        const double z2 =
            cgi * (X2 * sy2 + P2 * sx2) - gpar * (sz2 - szeq[i]);
        ax[i] = d6 * x1 + d3 * x2;
        ay[i] = d6 * y1 + d3 * y2;
        az[i] = d6 * z1 + d3 * z2;
        kx[i] = x2;
        ky[i] = y2;
        kz[i] = z2;
        qx += cgi * sx2;
        qy += cgi * sy2;
      }
      p1[c] = qx;
      p2[c] = qy;
    });
    const double S2x = combine(p1), S2y = combine(p2);

    const double k2X = -kap * X2 + dcs * P2 - 0.5 * S2y + two_sqrt_k * b2R;
    const double k2P = -kap * P2 - dcs * X2 - 0.5 * S2x + two_sqrt_k * b2I;
    const double X3 = X + hdt * k2X, P3 = P + hdt * k2P;

    // sweep B: stage 3 per bin, sums of stage-3 values
    sweep([&](std::size_t lo, std::size_t hi, int c) {
      double qx = 0.0, qy = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        const double d = del[i], cgi = cg[i];
        const double sx3 = sx[i] + hdt * kx[i];
        const double sy3 = sy[i] + hdt * ky[i];
        const double sz3 = sz[i] + hdt * kz[i];
        const double x3 = -d * sy3 - gp * sx3 - cgi * sz3 * P3;
        const double y3 = d * sx3 - gp * sy3 - cgi * sz3 * X3;
        const double z3 =
            cgi * (X3 * sy3 + P3 * sx3) - gpar * (sz3 - szeq[i]);
        ax[i] += d3 * x3;
        ay[i] += d3 * y3;
        az[i] += d3 * z3;
        kx[i] = x3;
        ky[i] = y3;
        kz[i] = z3;
        qx += cgi * sx3;
        qy += cgi * sy3;
      }
      p1[c] = qx;
      p2[c] = qy;
    });
    const double S3x = combine(p1), S3y = combine(p2);

    const double k3X = -kap * X3 + dcs * P3 - 0.5 * S3y + two_sqrt_k * b2R;
    const double k3P = -kap * P3 - dcs * X3 - 0.5 * S3x + two_sqrt_k * b2I;
    const double X4 = X + dt * k3X, P4 = P + dt * k3P;

    // sweep C: stage 4, state update, and both sum pairs (stage 4 for the
    // cavity update, fresh state for the next step's first stage)
    sweep([&](std::size_t lo, std::size_t hi, int c) {
      double qx4 = 0.0, qy4 = 0.0, qx1 = 0.0, qy1 = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        const double d = del[i], cgi = cg[i];
        const double sx4 = sx[i] + dt * kx[i];
        const double sy4 = sy[i] + dt * ky[i];
        const double sz4 = sz[i] + dt * kz[i];
        const double x4 = -d * sy4 - gp * sx4 - cgi * sz4 * P4;
        const double y4 = d * sx4 - gp * sy4 - cgi * sz4 * X4;
        const double z4 =
            cgi * (X4 * sy4 + P4 * sx4) - gpar * (sz4 - szeq[i]);
        qx4 += cgi * sx4;
        qy4 += cgi * sy4;
        const double nx = sx[i] + ax[i] + d6 * x4;
        const double ny = sy[i] + ay[i] + d6 * y4;
        const double nz = sz[i] + az[i] + d6 * z4;
        sx[i] = nx;
        sy[i] = ny;
        sz[i] = nz;
        qx1 += cgi * nx;
        qy1 += cgi * ny;
      }
      p1[c] = qx4;
      p2[c] = qy4;
      p3[c] = qx1;
      p4[c] = qy1;
    });
    const double S4x = combine(p1), S4y = combine(p2);
    S1x = combine(p3);
    S1y = combine(p4);

    const double k4X = -kap * X4 + dcs * P4 - 0.5 * S4y + two_sqrt_k * b4R;
    const double k4P = -kap * P4 - dcs * X4 - 0.5 * S4x + two_sqrt_k * b4I;
    X += d6 * (k1X + k4X) + d3 * (k2X + k3X);
    P += d6 * (k1P + k4P) + d3 * (k2P + k3P);

    const double tn = (n + 1) * dt;
    if ((n + 1) % spec.store_stride == 0 || n + 1 == n_steps) record(tn);
    snapshot(tn);
  }
  return trace;
}

struct BiT2Result {
  TimeTrace trace_A, trace_B;
  TimeTrace combined;  // weight_A * A + weight_B * B, no snapshots
  double weight_A = 0.0, weight_B = 0.0;
  double max_field_mismatch = 0.0;  // max |a_A - a_B| over the window
  double max_field = 0.0;           // max(|a_A|, |a_B|) over the window
};

// Two-component transverse decay: the ensemble is split into fractions that
// share the same couplings and detunings but decay with 1/T2A and 1/T2B.
// Each fraction is integrated against the full drive separately and the
// output fields are mixed by weight, which is exact as long as the spin
// back-action on the cavity stays in the linear regime; the recorded field
// mismatch between the legs bounds how much the two drives actually differed.
inline BiT2Result bi_t2_run(const SubEnsembleGrid& grid,
                            const CavityParams& cavity,
                            const DriveWaveform& drive, const BiexpSpec& biexp,
                            double gamma_par, const IntegratorSpec& spec,
                            double polarization, double window_t0 = 0.0,
                            double window_t1 = 0.0,
                            WorkerPool* pool = nullptr) {
  validate(biexp);
  BiT2Result out;
  out.weight_A = biexp.weight_A;
  out.weight_B = biexp.weight_B;
  DecoherenceSpec dec;
  dec.gamma_par = gamma_par;
  dec.gamma_perp = 1.0 / biexp.T2A;
  out.trace_A = integrate(grid, cavity, drive, dec, spec, polarization, pool);
  dec.gamma_perp = 1.0 / biexp.T2B;
  out.trace_B = integrate(grid, cavity, drive, dec, spec, polarization, pool);

  const auto& A = out.trace_A;
  const auto& B = out.trace_B;
  if (A.t.size() != B.t.size())
    throw numeric_error("decay legs produced different sample counts");
  out.combined.dt = A.dt;
  out.combined.store_stride = A.store_stride;
  out.combined.t = A.t;
  const std::size_t n = A.t.size();
  out.combined.X_c.resize(n);
  out.combined.P_c.resize(n);
  out.combined.aR_I.resize(n);
  out.combined.aR_Q.resize(n);
  const bool whole = !(window_t1 > window_t0);
  for (std::size_t i = 0; i < n; ++i) {
    out.combined.X_c[i] = biexp.weight_A * A.X_c[i] + biexp.weight_B * B.X_c[i];
    out.combined.P_c[i] = biexp.weight_A * A.P_c[i] + biexp.weight_B * B.P_c[i];
    out.combined.aR_I[i] =
        biexp.weight_A * A.aR_I[i] + biexp.weight_B * B.aR_I[i];
    out.combined.aR_Q[i] =
        biexp.weight_A * A.aR_Q[i] + biexp.weight_B * B.aR_Q[i];
    if (whole || (A.t[i] >= window_t0 && A.t[i] <= window_t1)) {
      const double ra = std::hypot(A.X_c[i], A.P_c[i]) / std::sqrt(2.0);
      const double rb = std::hypot(B.X_c[i], B.P_c[i]) / std::sqrt(2.0);
      const double dr = std::hypot(A.X_c[i] - B.X_c[i], A.P_c[i] - B.P_c[i]) /
                        std::sqrt(2.0);
      out.max_field = std::max({out.max_field, ra, rb});
      out.max_field_mismatch = std::max(out.max_field_mismatch, dr);
    }
  }
  return out;
}

}  // namespace spinecho
