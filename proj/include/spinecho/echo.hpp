#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spinecho/dynamics.hpp"
#include "spinecho/types.hpp"

namespace spinecho {

// ---------------------------------------------------------------------------
// Pulse sequences

struct Pulse {
  double t_center = 0.0;   // s
  double duration = 0.0;   // s
  double amplitude = 0.0;  // sqrt(photons/s)
  double phase = 0.0;      // rad
  double detuning = 0.0;   // rad/s, relative to omega_s
  double ramp = 10e-9;     // s, raised-cosine edge
};

inline DriveSegment to_segment(const Pulse& p) {
  DriveSegment s;
  s.t_start = p.t_center - 0.5 * p.duration;
  s.duration = p.duration;
  s.beta_R = p.amplitude * std::cos(p.phase);
  s.beta_I = p.amplitude * std::sin(p.phase);
  s.detuning = p.detuning;
  s.ramp = p.ramp;
  return s;
}

// Integral of the squared envelope; each raised-cosine edge contributes 3r/8.
inline double envelope_sq_integral(const Pulse& p) {
  return p.duration - 1.25 * p.ramp;
}

// Energy in photons carried by the pulse.
inline double pulse_energy(const Pulse& p) {
  return p.amplitude * p.amplitude * envelope_sq_integral(p);
}

struct Echo2PESequence {
  std::vector<Pulse> theta;
  Pulse refocus;
  double window_halfwidth = 0.0;  // s, 0 -> max(theta duration, 3/kappa)
};

struct BuiltSequence {
  DriveWaveform drive;
  std::vector<double> echo_times;    // s, 2 t_r - t_i, input order
  std::vector<double> input_energy;  // photons, per theta pulse
  double t_first_start = 0.0;        // s, leading edge of the first pulse
  double refocus_end = 0.0;          // s, trailing edge of the refocusing pulse
  double window_halfwidth = 0.0;     // s, resolved value
};

// Lays the stored pulses and the refocusing pulse into one waveform and
// computes where each echo is expected: a pulse centered at t_i refocused at
// t_r returns at 2 t_r - t_i, so the train comes back time-reversed.
inline BuiltSequence build_2pe(const Echo2PESequence& seq,
                               const CavityParams& cavity) {
  if (seq.theta.empty())
    throw validation_error("theta", "sequence has no stored pulses");
  validate(cavity);
  BuiltSequence out;
  double max_duration = 0.0;
  const double t_r = seq.refocus.t_center;
  const double refocus_start = t_r - 0.5 * seq.refocus.duration;
  for (const auto& p : seq.theta) {
    if (!(p.t_center + 0.5 * p.duration <= refocus_start))
      throw validation_error("theta",
                             "stored pulses must end before the refocusing "
                             "pulse starts");
    out.drive.segments.push_back(to_segment(p));
    out.echo_times.push_back(2.0 * t_r - p.t_center);
    out.input_energy.push_back(pulse_energy(p));
    max_duration = std::max(max_duration, p.duration);
  }
  out.drive.segments.push_back(to_segment(seq.refocus));
  std::sort(out.drive.segments.begin(), out.drive.segments.end(),
            [](const DriveSegment& a, const DriveSegment& b) {
              return a.t_start < b.t_start;
            });
  validate(out.drive);
  out.t_first_start = out.drive.segments.front().t_start;
  out.refocus_end = t_r + 0.5 * seq.refocus.duration;
  out.window_halfwidth = seq.window_halfwidth > 0.0
                             ? seq.window_halfwidth
                             : std::max(max_duration, 3.0 / cavity.kappa);
  return out;
}

// ---------------------------------------------------------------------------
// Echo detection

struct EchoMeasurement {
  double t_input = 0.0;      // s
  double phase_input = 0.0;  // rad
  double input_energy = 0.0; // photons
  double t_expected = 0.0;   // s
  double t_detected = 0.0;   // s, amplitude peak inside the window
  double peak_amp = 0.0;     // sqrt(photons/s)
  double energy = 0.0;       // photons, baseline-subtracted window integral
  double area = 0.0;         // sqrt(photons), integral of |a_R| over window
  double phase = 0.0;        // rad, from the complex window integral
  double efficiency = 0.0;   // filled by retrieval_efficiency
};

struct EchoReport {
  std::vector<EchoMeasurement> echoes;  // input order (echoes reversed in time)
  double refocus_phase = 0.0;           // rad
  double tau = 0.0;                     // s, refocusing pulse center
  double window_halfwidth = 0.0;        // s
  std::complex<double> baseline{0.0, 0.0};
};

struct DetectSpec {
  double baseline_t0 = 0.0;      // s
  double baseline_t1 = -1.0;     // s, <0 -> leading edge of the first pulse
  double demod_detuning = 0.0;   // rad/s, detection tone relative to omega_s
};

// Integrates the reflected field around each expected echo time. The complex
// baseline is the mean field over the quiet stretch before the first pulse;
// energies and phases come from baseline-subtracted trapezoid integrals.
inline EchoReport detect_echoes(const TimeTrace& trace,
                                const Echo2PESequence& seq,
                                const BuiltSequence& built,
                                const DetectSpec& det = {}) {
  if (trace.t.size() < 2) throw validation_error("trace", "trace is empty");
  const double w = built.window_halfwidth;
  if (!(w > 0.0)) throw validation_error("window_halfwidth", "must be positive");

  const double b1 =
      det.baseline_t1 >= 0.0 ? det.baseline_t1 : built.t_first_start;
  std::complex<double> bl{0.0, 0.0};
  std::size_t n_bl = 0;
  for (std::size_t i = 0; i < trace.t.size(); ++i) {
    if (trace.t[i] < det.baseline_t0) continue;
    if (trace.t[i] > b1) break;
    bl += std::complex<double>(trace.aR_I[i], trace.aR_Q[i]);
    ++n_bl;
  }
  if (n_bl > 0) bl /= static_cast<double>(n_bl);

  EchoReport rep;
  rep.refocus_phase = seq.refocus.phase;
  rep.tau = seq.refocus.t_center;
  rep.window_halfwidth = w;
  rep.baseline = bl;

  for (std::size_t k = 0; k < built.echo_times.size(); ++k) {
    const double te = built.echo_times[k];
    if (te - w < built.refocus_end)
      throw validation_error(
          "window", "detection window overlaps the refocusing pulse");
    if (te + w > trace.t.back() + 1e-12 * trace.dt)
      throw validation_error("trace", "trace ends before a detection window");

    EchoMeasurement m;
    m.t_input = seq.theta[k].t_center;
    m.phase_input = seq.theta[k].phase;
    m.input_energy = built.input_energy[k];
    m.t_expected = te;

    const auto lo = std::lower_bound(trace.t.begin(), trace.t.end(), te - w);
    const auto hi = std::upper_bound(trace.t.begin(), trace.t.end(), te + w);
    const std::size_t i0 = static_cast<std::size_t>(lo - trace.t.begin());
    const std::size_t i1 = static_cast<std::size_t>(hi - trace.t.begin());
    if (i1 - i0 < 2)
      throw validation_error("trace",
                             "fewer than two samples in a detection window");

    double esum = 0.0, asum = 0.0;
    double peak = -1.0, t_peak = te;
    for (std::size_t i = i0; i < i1; ++i) {
      const std::complex<double> z =
          std::complex<double>(trace.aR_I[i], trace.aR_Q[i]) - bl;
      const double mag = std::abs(z);
      // trapezoid: half weight on the window's first and last samples
      const double wt = (i == i0 || i == i1 - 1) ? 0.5 : 1.0;
      esum += wt * std::norm(z);
      asum += wt * mag;
      if (mag > peak) {
        peak = mag;
        t_peak = trace.t[i];
      }
    }
    // Phase is read on the half-power support only; the window tails can
    // carry the skirt of a neighboring echo, which would bias the estimate.
    std::complex<double> zsum{0.0, 0.0};
    const double thresh = peak / std::sqrt(2.0);
    for (std::size_t i = i0; i < i1; ++i) {
      const std::complex<double> z =
          std::complex<double>(trace.aR_I[i], trace.aR_Q[i]) - bl;
      if (std::abs(z) < thresh) continue;
      zsum += z * std::polar(1.0, det.demod_detuning * trace.t[i]);
    }
    const double dts = trace.dt * trace.store_stride;
    m.energy = esum * dts;
    m.area = asum * dts;
    m.phase = std::arg(zsum);
    m.peak_amp = peak;
    m.t_detected = t_peak;
    rep.echoes.push_back(m);
  }
  return rep;
}

// Energy retrieved per stored photon, echo by echo.
inline std::vector<double> retrieval_efficiency(EchoReport& rep) {
  std::vector<double> out;
  out.reserve(rep.echoes.size());
  for (auto& e : rep.echoes) {
    if (!(e.input_energy > 0.0))
      throw validation_error("input_energy", "must be positive");
    e.efficiency = e.energy / e.input_energy;
    out.push_back(e.efficiency);
  }
  return out;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + constants::pi, 2.0 * constants::pi);
  if (a < 0.0) a += 2.0 * constants::pi;
  return a - constants::pi;
}

// The echo phases follow -(phi_i - phi_r) up to one constant set by the
// detection chain (cavity rotation plus the conjugation quadrature). Returns
// that constant and the per-echo residuals against the pattern.
inline std::pair<double, std::vector<double>> phase_pattern_residuals(
    const EchoReport& rep) {
  std::complex<double> acc{0.0, 0.0};
  for (const auto& e : rep.echoes)
    acc += std::polar(1.0, e.phase + (e.phase_input - rep.refocus_phase));
  const double offset = std::arg(acc);
  std::vector<double> res;
  res.reserve(rep.echoes.size());
  for (const auto& e : rep.echoes)
    res.push_back(
        wrap_angle(e.phase + (e.phase_input - rep.refocus_phase) - offset));
  return {offset, res};
}

// ---------------------------------------------------------------------------
// Decay-law fit

struct BiexpFit {
  BiexpSpec spec;             // T2A <= T2B, weights normalized to A + B
  double A = 0.0, B = 0.0;    // raw amplitudes, f(0) = A + B
  Eigen::Matrix4d covariance; // order (A, B, T2A, T2B)
  double ssr = 0.0;
  int iterations = 0;
};

namespace detail {

inline double biexp_ssr(const std::vector<double>& tau,
                        const std::vector<double>& y, double A, double B,
                        double TA, double TB) {
  double s = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double r =
        y[i] - A * std::exp(-2.0 * tau[i] / TA) - B * std::exp(-2.0 * tau[i] / TB);
    s += r * r;
  }
  return s;
}

// For fixed time constants the amplitudes enter linearly; the 2x2 normal
// equations give the best (A, B) directly, which makes seed scans cheap.
inline bool biexp_linear_amps(const std::vector<double>& tau,
                              const std::vector<double>& y, double TA,
                              double TB, double& A, double& B) {
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double e1 = std::exp(-2.0 * tau[i] / TA);
    const double e2 = std::exp(-2.0 * tau[i] / TB);
    s11 += e1 * e1;
    s12 += e1 * e2;
    s22 += e2 * e2;
    b1 += e1 * y[i];
    b2 += e2 * y[i];
  }
  const double det = s11 * s22 - s12 * s12;
  if (!(std::abs(det) > 1e-14 * s11 * s22)) return false;
  A = (b1 * s22 - b2 * s12) / det;
  B = (b2 * s11 - b1 * s12) / det;
  return true;
}

}  // namespace detail

// Levenberg-Marquardt fit of A exp(-2 tau/T2A) + B exp(-2 tau/T2B) with an
// analytic Jacobian. Seeds come from a grid over the time constants with the
// amplitudes solved linearly; the best few seeds are polished in turn until
// one converges.
inline BiexpFit fit_biexp_decay(const std::vector<double>& tau,
                                const std::vector<double>& amplitude) {
  const std::size_t n = tau.size();
  if (n != amplitude.size())
    throw validation_error("amplitude", "length mismatch with tau");
  if (n < 6) throw validation_error("tau", "need at least 6 points");
  for (std::size_t i = 1; i < n; ++i)
    if (!(tau[i] > tau[i - 1]))
      throw validation_error("tau", "must be strictly increasing");

  const double span = tau.back() - tau.front();
  if (!(span > 0.0)) throw validation_error("tau", "zero span");

  struct Seed {
    double ssr, A, B, TA, TB;
  };
  std::vector<Seed> seeds;
  for (int i = 0; i < 8; ++i) {
    const double TA = 0.05 * span * std::pow(40.0, i / 7.0);
    for (int j = 0; j < 8; ++j) {
      const double TB = TA * std::pow(30.0, (j + 1) / 8.0);
      double A, B;
      if (!detail::biexp_linear_amps(tau, amplitude, TA, TB, A, B)) continue;
      seeds.push_back({detail::biexp_ssr(tau, amplitude, A, B, TA, TB), A, B,
                       TA, TB});
    }
  }
  if (seeds.empty()) throw numeric_error("decay fit found no usable seed");
  std::sort(seeds.begin(), seeds.end(),
            [](const Seed& a, const Seed& b) { return a.ssr < b.ssr; });

  const int max_restarts = std::min<int>(5, static_cast<int>(seeds.size()));
  BiexpFit best;
  bool have_fit = false;

  for (int attempt = 0; attempt < max_restarts && !have_fit; ++attempt) {
    Eigen::Vector4d p(seeds[attempt].A, seeds[attempt].B, seeds[attempt].TA,
                      seeds[attempt].TB);
    double lambda = 1e-3;
    double ssr = seeds[attempt].ssr;
    int it = 0;
    bool converged = false;
    for (; it < 200 && !converged; ++it) {
      Eigen::Matrix4d JtJ = Eigen::Matrix4d::Zero();
      Eigen::Vector4d Jtr = Eigen::Vector4d::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const double e1 = std::exp(-2.0 * tau[i] / p[2]);
        const double e2 = std::exp(-2.0 * tau[i] / p[3]);
        const double r = amplitude[i] - p[0] * e1 - p[1] * e2;
        Eigen::Vector4d J;
        J << e1, e2, p[0] * e1 * 2.0 * tau[i] / (p[2] * p[2]),
            p[1] * e2 * 2.0 * tau[i] / (p[3] * p[3]);
        JtJ += J * J.transpose();
        Jtr += J * r;
      }
      bool stepped = false;
      for (int tries = 0; tries < 30; ++tries) {
        Eigen::Matrix4d M = JtJ;
        for (int d = 0; d < 4; ++d)
          M(d, d) += lambda * std::max(JtJ(d, d), 1e-30);
        const Eigen::Vector4d step = M.ldlt().solve(Jtr);
        const Eigen::Vector4d q = p + step;
        if (q[2] > 0.0 && q[3] > 0.0) {
          const double s2 =
              detail::biexp_ssr(tau, amplitude, q[0], q[1], q[2], q[3]);
          if (s2 <= ssr) {
            const double drop = ssr - s2;
            p = q;
            ssr = s2;
            lambda = std::max(lambda * 0.3, 1e-12);
            stepped = true;
            converged = drop <= 1e-14 * (ssr + 1e-30) ||
                        step.norm() <= 1e-12 * (p.norm() + 1e-30);
            break;
          }
        }
        lambda *= 10.0;
      }
      if (!stepped) {
        converged = true;  // no downhill step left at this scale
        break;
      }
    }
    if (!converged) continue;

    const double s_final =
        detail::biexp_ssr(tau, amplitude, p[0], p[1], p[2], p[3]);
    if (!std::isfinite(s_final)) continue;

    BiexpFit fit;
    fit.A = p[0];
    fit.B = p[1];
    fit.spec.T2A = p[2];
    fit.spec.T2B = p[3];
    fit.ssr = s_final;
    fit.iterations = it;
    if (fit.spec.T2A > fit.spec.T2B) {
      std::swap(fit.spec.T2A, fit.spec.T2B);
      std::swap(fit.A, fit.B);
    }
    const double total = fit.A + fit.B;
    if (!(std::abs(total) > 0.0)) continue;
    fit.spec.weight_A = fit.A / total;
    fit.spec.weight_B = fit.B / total;

    Eigen::Matrix4d JtJ = Eigen::Matrix4d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double e1 = std::exp(-2.0 * tau[i] / fit.spec.T2A);
      const double e2 = std::exp(-2.0 * tau[i] / fit.spec.T2B);
      Eigen::Vector4d J;
      J << e1, e2, fit.A * e1 * 2.0 * tau[i] / (fit.spec.T2A * fit.spec.T2A),
          fit.B * e2 * 2.0 * tau[i] / (fit.spec.T2B * fit.spec.T2B);
      JtJ += J * J.transpose();
    }
    const double dof = n > 4 ? static_cast<double>(n - 4) : 1.0;
    fit.covariance =
        JtJ.fullPivLu().inverse() * (fit.ssr / dof);
    best = fit;
    have_fit = true;
  }
  if (!have_fit)
    throw numeric_error("decay fit did not converge from any seed");
  return best;
}

// ---------------------------------------------------------------------------
// Parameter sweeps

// Runs one sequence per refocusing-pulse power and integrates |a_R| over the
// echo windows. dec may carry a two-component T2 split; without one a single
// integration per point is used.
struct PowerPoint {
  double power = 0.0;  // photons/s into the refocusing pulse
  double area = 0.0;   // sqrt(photons), summed over echo windows
};

namespace detail {

inline TimeTrace run_sequence(const SubEnsembleGrid& grid,
                              const CavityParams& cavity,
                              const DecoherenceSpec& dec,
                              const BuiltSequence& built,
                              const IntegratorSpec& spec, double polarization,
                              WorkerPool* pool) {
  if (dec.biexp) {
    BiT2Result r =
        bi_t2_run(grid, cavity, built.drive, *dec.biexp, dec.gamma_par, spec,
                  polarization, 0.0, 0.0, pool);
    return std::move(r.combined);
  }
  return integrate(grid, cavity, built.drive, dec, spec, polarization, pool);
}

}  // namespace detail

inline std::vector<PowerPoint> sweep_refocus_power(
    const SubEnsembleGrid& grid, const CavityParams& cavity,
    const DecoherenceSpec& dec, const Echo2PESequence& seq_template,
    const std::vector<double>& powers, const IntegratorSpec& spec,
    double polarization, WorkerPool* pool = nullptr) {
  if (powers.size() < 3)
    throw validation_error("powers", "need at least 3 points");
  std::vector<PowerPoint> out;
  out.reserve(powers.size());
  for (double pw : powers) {
    if (pw < 0.0) throw validation_error("powers", "must be non-negative");
    Echo2PESequence seq = seq_template;
    seq.refocus.amplitude = std::sqrt(pw);
    const BuiltSequence built = build_2pe(seq, cavity);
    IntegratorSpec sp = spec;
    if (!(sp.t_end > 0.0))
      sp.t_end =
          *std::max_element(built.echo_times.begin(), built.echo_times.end()) +
          built.window_halfwidth + 5.0 / cavity.kappa;
    const TimeTrace tr =
        detail::run_sequence(grid, cavity, dec, built, sp, polarization, pool);
    EchoReport rep = detect_echoes(tr, seq, built);
    PowerPoint pt;
    pt.power = pw;
    for (const auto& e : rep.echoes) pt.area += e.area;
    out.push_back(pt);
  }
  return out;
}

struct TauPoint {
  double tau = 0.0;  // s, storage-to-refocus delay of the single stored pulse
  EchoReport report;
};

struct TauSweep {
  std::vector<TauPoint> points;
  double prefactor_c = 0.0;  // least squares of efficiency against f(tau)^2
};

// Sweeps the storage delay of a single-pulse sequence: the stored pulse stays
// put and the refocusing pulse moves to t_1 + tau. The prefactor is the
// through-origin least-squares slope of efficiency against f(tau)^2 for the
// supplied decay envelope f.
inline TauSweep sweep_tau(const SubEnsembleGrid& grid,
                          const CavityParams& cavity,
                          const DecoherenceSpec& dec,
                          const Echo2PESequence& seq_template,
                          const std::vector<double>& taus,
                          const IntegratorSpec& spec, double polarization,
                          const std::function<double(double)>& f_of_tau,
                          WorkerPool* pool = nullptr) {
  if (seq_template.theta.size() != 1)
    throw validation_error("theta", "delay sweep expects one stored pulse");
  if (taus.size() < 3) throw validation_error("taus", "need at least 3 points");
  TauSweep out;
  double num = 0.0, den = 0.0;
  for (double tv : taus) {
    Echo2PESequence seq = seq_template;
    seq.refocus.t_center = seq.theta.front().t_center + tv;
    const BuiltSequence built = build_2pe(seq, cavity);
    IntegratorSpec sp = spec;
    if (!(sp.t_end > 0.0))
      sp.t_end = built.echo_times.front() + built.window_halfwidth +
                 5.0 / cavity.kappa;
    const TimeTrace tr =
        detail::run_sequence(grid, cavity, dec, built, sp, polarization, pool);
    TauPoint pt;
    pt.tau = tv;
    pt.report = detect_echoes(tr, seq, built);
    retrieval_efficiency(pt.report);
    if (f_of_tau) {
      const double f2 = f_of_tau(tv) * f_of_tau(tv);
      num += f2 * pt.report.echoes.front().efficiency;
      den += f2 * f2;
    }
    out.points.push_back(std::move(pt));
  }
  if (den > 0.0) out.prefactor_c = num / den;
  return out;
}

}  // namespace spinecho
