#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "spinecho/config.hpp"
#include "spinecho/coupling.hpp"
#include "spinecho/distributions.hpp"
#include "spinecho/dynamics.hpp"
#include "spinecho/echo.hpp"
#include "spinecho/fieldmap.hpp"
#include "spinecho/types.hpp"

namespace spinecho {

// ---------------------------------------------------------------------------
// Reference parameter bundle: the values the test suite and the bundled
// configs/reference.ini are built around. The shipped file must stay byte
// identical to this text; a unit test compares them.

inline const char* reference_config_text() {
  return R"CFG(# Reference parameter set for the NV-ensemble storage simulator.
# Angular frequencies take Hz-family suffixes (the 2 pi is implied);
# amplitudes are in sqrt_photons/s, powers in photons/s or dBm.

[cavity]
omega_c = 2.88 GHz
quality_factor = 80
filling_factor = 0.29
char_impedance = 26

[nv]
D = 2.8775 GHz
A_hf = -2.1 MHz
Q_nuc = -5 MHz

[distributions]
db0 = 0.21 Gs
dD0 = 150 kHz
E1 = 0.5 MHz
E2 = 10 MHz
A1 = 0.2

# The bin spacing sets a recurrence time 1/df for any stored coherence;
# keep it longer than the simulated window (80 MHz / 3000 -> 37.5 us).
[grid]
omega_min = 2.84 GHz
omega_max = 2.92 GHz
n_omega = 3001
omega_s = 2.8795 GHz
M_g = 21
n_psi = 64

[sample]
concentration_ppm = 2
B_NV = 0 mT
polarization = 0.9
g_ens_measured = 5.0 MHz
polarization_at_measurement = 0.64

[resonator]
n_wires = 9
pitch = 10 um
wire_width = 5 um
n_filaments = 16
active_length = 100 um
gap = 0.7 um
grid_dx = 0.25 um
grid_dy = 0.25 um

[decoherence]
T2A = 4.7 us
T2B = 14.3 us
weight_A = 0.78
weight_B = 0.22
gamma_par = 0 per_s

[drive.1]
role = theta
t_center = 1.0 us
duration = 1.0 us
power = 5.6e11 photons/s
phase = -45 deg

[drive.2]
role = theta
t_center = 2.8 us
duration = 1.0 us
power = 5.6e11 photons/s
phase = -45 deg

[drive.3]
role = theta
t_center = 4.6 us
duration = 1.0 us
power = 5.6e11 photons/s
phase = 45 deg

[drive.4]
role = theta
t_center = 6.4 us
duration = 1.0 us
power = 5.6e11 photons/s
phase = -45 deg

[drive.5]
role = theta
t_center = 8.2 us
duration = 1.0 us
power = 5.6e11 photons/s
phase = 45 deg

[drive.6]
role = theta
t_center = 10.0 us
duration = 1.0 us
power = 5.6e11 photons/s
phase = 45 deg

[drive.7]
role = refocus
t_center = 19.1 us
duration = 1.0 us
power = 5.6e16 photons/s
phase = 0.1 rad

[echo]
window_halfwidth = 0.85 us

[simulation]
dt = 0 s
safety = 0.1
t_end = 38.5 us
store_stride = 1
threads = 0
)CFG";
}

// ---------------------------------------------------------------------------
// Bundle assembly

struct SampleSpec {
  double concentration = 0.0;  // spins per m^3
  double B_NV = 0.0;           // tesla
  double polarization = 1.0;   // p' entering S_z = -N p'
  double g_ens_measured = 0.0; // rad/s, 0 -> no rescaling
  double polarization_at_measurement = 1.0;
};

struct SimBundle {
  CavityParams cavity;
  NVParams nv;
  DistributionSpec dist;
  DecoherenceSpec dec;
  AxisSpec axis;
  double omega_s = 0.0;
  int M_g = 21;
  int n_psi = 64;
  SampleSpec sample;
  WireGeometry wires;
  FieldGridSpec field_grid;
  Echo2PESequence sequence;
  IntegratorSpec sim;
  int threads = 0;  // 0 -> library decides
};

inline Pulse parse_pulse(const ConfigDoc& doc, const std::string& sec,
                         double carrier_omega) {
  Pulse p;
  p.t_center = doc.time_s(sec, "t_center");
  p.duration = doc.time_s(sec, "duration");
  if (doc.find(sec, "amplitude")) {
    if (doc.find(sec, "power"))
      throw validation_error(sec, "give amplitude or power, not both");
    p.amplitude = doc.amplitude(sec, "amplitude");
  } else {
    p.amplitude = std::sqrt(doc.photon_flux(sec, "power", carrier_omega));
  }
  p.phase = doc.angle_rad(sec, "phase");
  p.detuning = doc.angular_freq_or(sec, "detuning", 0.0);
  p.ramp = doc.time_s_or(sec, "ramp", 10e-9);
  return p;
}

// Builds the full simulation bundle from a parsed config. Cross-field
// checks run here so a CLI failure names the config entry.
inline SimBundle load_bundle(const ConfigDoc& doc) {
  SimBundle b;

  b.cavity = cavity_from_Q(doc.angular_freq("cavity", "omega_c"),
                           doc.number("cavity", "quality_factor"),
                           doc.number_or("cavity", "filling_factor", 1.0),
                           doc.number_or("cavity", "char_impedance", 50.0));
  validate(b.cavity);

  b.nv = make_nv(doc.angular_freq("nv", "D"),
                 doc.angular_freq("nv", "A_hf"),
                 doc.angular_freq("nv", "Q_nuc"));
  validate(b.nv);

  b.axis.omega_min = doc.angular_freq("grid", "omega_min");
  b.axis.omega_max = doc.angular_freq("grid", "omega_max");
  b.axis.n = static_cast<int>(doc.number("grid", "n_omega"));
  validate(b.axis);
  b.omega_s = doc.angular_freq("grid", "omega_s");
  b.M_g = static_cast<int>(doc.number_or("grid", "M_g", 21));
  b.n_psi = static_cast<int>(doc.number_or("grid", "n_psi", 64));

  b.dist.db0 = doc.field_T("distributions", "db0");
  b.dist.dD0 = doc.angular_freq("distributions", "dD0");
  b.dist.E1 = doc.angular_freq("distributions", "E1");
  b.dist.E2 = doc.angular_freq("distributions", "E2");
  b.dist.A1 = doc.number("distributions", "A1");
  // default discretization scale: the omega-axis spacing
  b.dist.d_omega0 = doc.angular_freq_or(
      "distributions", "d_omega0",
      (b.axis.omega_max - b.axis.omega_min) / (b.axis.n - 1));
  validate(b.dist);

  b.sample.concentration = doc.number("sample", "concentration_ppm") * 1e-6 *
                           constants::diamond_site_density;
  b.sample.B_NV = doc.field_T_or("sample", "B_NV", 0.0);
  b.sample.polarization = doc.number_or("sample", "polarization", 1.0);
  if (doc.find("sample", "g_ens_measured")) {
    b.sample.g_ens_measured = doc.angular_freq("sample", "g_ens_measured");
    b.sample.polarization_at_measurement =
        doc.number_or("sample", "polarization_at_measurement", 1.0);
  }

  b.wires.n_wires = static_cast<int>(doc.number_or("resonator", "n_wires", 9));
  b.wires.pitch = doc.length_m_or("resonator", "pitch", 10e-6);
  b.wires.wire_width = doc.length_m_or("resonator", "wire_width", 5e-6);
  b.wires.n_filaments =
      static_cast<int>(doc.number_or("resonator", "n_filaments", 16));
  b.wires.active_length = doc.length_m_or("resonator", "active_length", 100e-6);
  b.wires.gap = doc.length_m_or("resonator", "gap", 0.7e-6);
  b.wires.sample_height = doc.length_m_or("resonator", "sample_height", 0.0);
  b.wires.sample_halfwidth =
      doc.length_m_or("resonator", "sample_halfwidth", 0.0);
  validate(b.wires);
  b.field_grid.dx = doc.length_m_or("resonator", "grid_dx", 0.25e-6);
  b.field_grid.dy = doc.length_m_or("resonator", "grid_dy", 0.25e-6);

  if (doc.find("decoherence", "T2B")) {
    BiexpSpec bi;
    bi.T2A = doc.time_s("decoherence", "T2A");
    bi.T2B = doc.time_s("decoherence", "T2B");
    bi.weight_A = doc.number("decoherence", "weight_A");
    bi.weight_B = doc.number("decoherence", "weight_B");
    validate(bi);
    b.dec.biexp = bi;
    b.dec.gamma_perp = 1.0 / bi.T2A;
  } else {
    b.dec.gamma_perp = 1.0 / doc.time_s("decoherence", "T2A");
  }
  b.dec.gamma_par = doc.rate_per_s_or("decoherence", "gamma_par", 0.0);
  validate(b.dec);

  // [drive.N] sections, ordered by N
  std::vector<std::pair<int, std::string>> drive_secs;
  for (const auto& s : doc.sections_with_prefix("drive.")) {
    const std::string tail = s.substr(6);
    int n = 0;
    const char* tb = tail.data();
    const char* te = tail.data() + tail.size();
    auto res = std::from_chars(tb, te, n);
    if (res.ec != std::errc{} || res.ptr != te)
      throw validation_error(s, "drive sections must be numbered drive.N");
    drive_secs.emplace_back(n, s);
  }
  std::sort(drive_secs.begin(), drive_secs.end());
  bool have_refocus = false;
  for (const auto& [n, sec] : drive_secs) {
    const std::string role = doc.str(sec, "role");
    const Pulse p = parse_pulse(doc, sec, b.omega_s);
    if (role == "theta") {
      b.sequence.theta.push_back(p);
    } else if (role == "refocus") {
      if (have_refocus)
        throw validation_error(sec, "only one refocusing pulse allowed");
      b.sequence.refocus = p;
      have_refocus = true;
    } else {
      throw validation_error(sec + ".role", "must be theta or refocus");
    }
  }
  (void)have_refocus;  // absence is legal; echo building rejects it later
  b.sequence.window_halfwidth =
      doc.time_s_or("echo", "window_halfwidth", 0.0);

  b.sim.dt = doc.time_s_or("simulation", "dt", 0.0);
  b.sim.safety = doc.number_or("simulation", "safety", 0.1);
  b.sim.t_end = doc.time_s_or("simulation", "t_end", 0.0);
  b.sim.store_stride =
      static_cast<int>(doc.number_or("simulation", "store_stride", 1));
  b.threads = static_cast<int>(doc.number_or("simulation", "threads", 0));

  return b;
}

inline ConfigDoc reference_doc() {
  return ConfigDoc::parse(reference_config_text(), "reference");
}

// ---------------------------------------------------------------------------
// Derived-object pipeline

// Combined-family spectral density at the bundle's applied field.
inline FrequencyDensity bundle_density(const SimBundle& b) {
  const FrequencyDensity orth =
      frequency_density(b.sample.B_NV, b.dist, b.nv, Family::orth, b.axis);
  const FrequencyDensity tilted =
      frequency_density(b.sample.B_NV, b.dist, b.nv, Family::non_orth, b.axis);
  return combine_families(orth, tilted);
}

// Coupling histogram from the wire-array field, rescaled to the measured
// ensemble coupling when one is configured.
inline CouplingDensity bundle_coupling(const SimBundle& b) {
  const FieldMap map = analytic_wire_field(b.wires, b.cavity, b.field_grid);
  CouplingDensity cd =
      coupling_density(map, b.sample.concentration, b.nv, b.n_psi, b.M_g);
  if (b.sample.g_ens_measured > 0.0)
    cd = rescale_to_measured(cd, b.sample.g_ens_measured,
                             b.sample.polarization_at_measurement);
  return cd;
}

inline SubEnsembleGrid bundle_grid(const SimBundle& b,
                                   const FrequencyDensity& rho,
                                   const CouplingDensity& cd) {
  return build_grid(rho, cd, b.omega_s);
}

}  // namespace spinecho
