// Command-line front end: wires the config bundle to the simulation library
// and writes CSV/JSON outputs with a manifest next to them.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <spinecho/bundle.hpp>
#include <spinecho/config.hpp>
#include <spinecho/coupling.hpp>
#include <spinecho/distributions.hpp>
#include <spinecho/dynamics.hpp>
#include <spinecho/echo.hpp>
#include <spinecho/fieldmap.hpp>
#include <spinecho/io.hpp>
#include <spinecho/linear_response.hpp>
#include <spinecho/parallel.hpp>
#include <spinecho/spectrum.hpp>

namespace {

using namespace spinecho;

constexpr double kTwoPiMHz = constants::two_pi * 1e6;

double to_MHz(double omega) { return omega / kTwoPiMHz; }

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path,
                  "Config file; the built-in reference set when omitted");
  cmd->add_option("--set", o.overrides,
                  "Override entries as section.key=value")
      ->type_name("KEY=VAL");
  cmd->add_option("--out", o.out_dir, "Output directory (default .)");
}

ConfigDoc load_doc(const CommonOpts& o) {
  ConfigDoc doc = o.config_path.empty() ? reference_doc()
                                        : ConfigDoc::parse_file(o.config_path);
  for (const auto& ov : o.overrides) doc.apply_override(ov);
  return doc;
}

// Wall clock + manifest bookkeeping shared by every subcommand.
struct RunContext {
  CommonOpts opts;
  ConfigDoc doc;
  RunManifest manifest;
  std::chrono::steady_clock::time_point t0;

  explicit RunContext(const CommonOpts& o, const std::string& subcommand)
      : opts(o), doc(load_doc(o)) {
    std::filesystem::create_directories(opts.out_dir);
    manifest.subcommand = subcommand;
    manifest.config_path =
        o.config_path.empty() ? "<built-in reference>" : o.config_path;
    manifest.config_hash = fnv1a_hex(doc.serialize());
    manifest.overrides = o.overrides;
    manifest.threads = 1;
    t0 = std::chrono::steady_clock::now();
  }

  std::string path(const std::string& name) {
    const auto p = (std::filesystem::path(opts.out_dir) / name).string();
    manifest.outputs.push_back(p);
    return p;
  }

  void finish() {
    manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const auto mpath = write_manifest(manifest, opts.out_dir);
    std::printf("wrote %s\n", mpath.c_str());
  }
};

std::vector<double> parse_list(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw validation_error(what, "bad number '" + tok + "'");
    }
  }
  if (out.empty()) throw validation_error(what, "empty list");
  return out;
}

// ---------------------------------------------------------------------------
// spectrum: transition frequencies against the applied field

struct SpectrumOpts {
  CommonOpts common;
  double b_min_mT = 0.0, b_max_mT = 2.0;
  int n = 201;
  std::string family = "tilted";
  double strain_MHz = 0.0;
  bool exact = false;
};

void run_spectrum(const SpectrumOpts& o) {
  RunContext ctx(o.common, "spectrum");
  const SimBundle b = load_bundle(ctx.doc);
  if (o.n < 2) throw validation_error("n", "need at least 2 field points");
  double cos_alpha;
  if (o.family == "tilted")
    cos_alpha = std::cos(b.nv.alpha_family[0]);
  else if (o.family == "orth")
    cos_alpha = std::cos(b.nv.alpha_family[2]);
  else
    throw validation_error("family", "must be tilted or orth");
  const double E = o.strain_MHz * kTwoPiMHz;

  CsvTable t;
  t.comments = {"transition frequencies, " + o.family + " family",
                std::string("mode=") + (o.exact ? "exact" : "closed-form"),
                "strain_MHz=" + std::to_string(o.strain_MHz)};
  t.columns = {"B_NV_mT",        "f_lo_mI-1_MHz", "f_hi_mI-1_MHz",
               "f_lo_mI0_MHz",   "f_hi_mI0_MHz",  "f_lo_mI+1_MHz",
               "f_hi_mI+1_MHz"};
  for (int i = 0; i < o.n; ++i) {
    const double B_mT =
        o.b_min_mT + (o.b_max_mT - o.b_min_mT) * i / (o.n - 1);
    const double B = B_mT * 1e-3;
    std::vector<double> row{B_mT};
    if (o.exact) {
      // field in the defect frame; the transverse part fixed along x
      const double sin_alpha = std::sqrt(1.0 - cos_alpha * cos_alpha);
      const auto f = transition_freq_exact(
          b.nv, E, {B * sin_alpha, 0.0, B * cos_alpha});
      for (const auto& label : all_transitions())
        row.push_back(to_MHz(f[transition_index(label)]));
    } else {
      for (const auto& label : all_transitions())
        row.push_back(to_MHz(transition_freq_approx(label, E, B, cos_alpha,
                                                    b.nv.D, 0.0, b.nv)));
    }
    t.rows.push_back(std::move(row));
  }
  emit_csv(t, ctx.path("spectrum.csv"));
  ctx.finish();
}

// ---------------------------------------------------------------------------
// density: inhomogeneous line shape on the configured axis

struct DensityOpts {
  CommonOpts common;
  std::string family = "combined";
};

void run_density(const DensityOpts& o) {
  RunContext ctx(o.common, "density");
  const SimBundle b = load_bundle(ctx.doc);
  FrequencyDensity rho;
  if (o.family == "combined") {
    rho = bundle_density(b);
  } else if (o.family == "orth") {
    rho = frequency_density(b.sample.B_NV, b.dist, b.nv, Family::orth, b.axis);
  } else if (o.family == "tilted") {
    rho =
        frequency_density(b.sample.B_NV, b.dist, b.nv, Family::non_orth, b.axis);
  } else {
    throw validation_error("family", "must be combined, orth or tilted");
  }
  CsvTable t;
  t.comments = {"family=" + o.family,
                "B_NV_mT=" + detail::format_double(b.sample.B_NV * 1e3),
                "normalized: integral over MHz axis = 1"};
  t.columns = {"omega_MHz", "rho_per_MHz"};
  for (std::size_t i = 0; i < rho.omega_axis.size(); ++i)
    t.rows.push_back({to_MHz(rho.omega_axis[i]), rho.density[i] * kTwoPiMHz});
  emit_csv(t, ctx.path("density.csv"));
  ctx.finish();
}

// ---------------------------------------------------------------------------
// coupling: single-spin coupling histogram from the wire-array field

struct CouplingOpts {
  CommonOpts common;
  std::string field_path;  // imported field map instead of the analytic array
  std::string save_field;  // export the field map that was used
  bool sensitivity = false;
};

CsvTable coupling_table(const CouplingDensity& cd) {
  CsvTable t;
  t.comments = {
      "g2rho_weight = spin count x (g/2pi MHz)^2 per bin; sums to "
      "(g_ens/2pi MHz)^2",
      "family: 0 = orthogonal pair, 1 = tilted pair",
      "g_ens_MHz=" + detail::format_double(to_MHz(cd.g_ens)),
      "dropped_coupling_sq_MHz2=" +
          detail::format_double(cd.dropped_coupling_sq / (kTwoPiMHz * kTwoPiMHz))};
  t.columns = {"g_over_2pi_MHz", "g2rho_weight", "family"};
  for (const auto& bin : cd.bins) {
    const double g_MHz = to_MHz(bin.g_m);
    const double w_tilt = bin.weight - bin.weight_orth;
    if (bin.weight_orth > 0.0)
      t.rows.push_back({g_MHz, bin.weight_orth * g_MHz * g_MHz, 0.0});
    if (w_tilt > 0.0)
      t.rows.push_back({g_MHz, w_tilt * g_MHz * g_MHz, 1.0});
  }
  return t;
}

void run_coupling(const CouplingOpts& o) {
  RunContext ctx(o.common, "coupling");
  const SimBundle b = load_bundle(ctx.doc);

  FieldMap map = o.field_path.empty()
                     ? analytic_wire_field(b.wires, b.cavity, b.field_grid)
                     : load_field_map(o.field_path);
  if (!o.save_field.empty()) {
    save_field_map(map, o.save_field);
    ctx.manifest.outputs.push_back(o.save_field);
  }

  CouplingDensity cd =
      coupling_density(map, b.sample.concentration, b.nv, b.n_psi, b.M_g);
  const double first_principles = cd.g_ens;
  const double orth_share =
      cd.orth_coupling_sq / (cd.orth_coupling_sq + cd.non_orth_coupling_sq);
  if (b.sample.g_ens_measured > 0.0)
    cd = rescale_to_measured(cd, b.sample.g_ens_measured,
                             b.sample.polarization_at_measurement);

  CsvTable t = coupling_table(cd);
  t.comments.push_back("first_principles_g_ens_MHz=" +
                       detail::format_double(to_MHz(first_principles)));
  t.comments.push_back("orth_coupling_share=" +
                       detail::format_double(orth_share));
  emit_csv(t, ctx.path("coupling.csv"));
  std::printf("g_ens/2pi = %.4f MHz (first principles %.4f MHz), "
              "orthogonal-family share %.4f\n",
              to_MHz(cd.g_ens), to_MHz(first_principles), orth_share);

  if (o.sensitivity) {
    // how strongly the ensemble coupling depends on the two least-known
    // geometry numbers: crystal-to-chip gap and active meander length
    if (!o.field_path.empty())
      throw validation_error("sensitivity",
                             "needs the analytic field model, not an import");
    CsvTable s;
    s.comments = {"geometry sensitivity of the first-principles coupling",
                  "varied one at a time around the configured values"};
    s.columns = {"gap_um", "active_length_um", "g_ens_over_2pi_MHz",
                 "orth_share"};
    for (double scale : {0.5, 0.75, 1.0, 1.5, 2.0}) {
      WireGeometry w = b.wires;
      w.gap = b.wires.gap * scale;
      const FieldMap m = analytic_wire_field(w, b.cavity, b.field_grid);
      const CouplingDensity c =
          coupling_density(m, b.sample.concentration, b.nv, b.n_psi, b.M_g);
      s.rows.push_back(
          {w.gap * 1e6, w.active_length * 1e6, to_MHz(c.g_ens),
           c.orth_coupling_sq /
               (c.orth_coupling_sq + c.non_orth_coupling_sq)});
    }
    for (double scale : {0.5, 0.75, 1.5, 2.0}) {
      WireGeometry w = b.wires;
      w.active_length = b.wires.active_length * scale;
      const FieldMap m = analytic_wire_field(w, b.cavity, b.field_grid);
      const CouplingDensity c =
          coupling_density(m, b.sample.concentration, b.nv, b.n_psi, b.M_g);
      s.rows.push_back(
          {w.gap * 1e6, w.active_length * 1e6, to_MHz(c.g_ens),
           c.orth_coupling_sq /
               (c.orth_coupling_sq + c.non_orth_coupling_sq)});
    }
    emit_csv(s, ctx.path("coupling_sensitivity.csv"));
  }
  ctx.finish();
}

// ---------------------------------------------------------------------------
// reflect: single-port reflection across the configured axis

struct ReflectOpts {
  CommonOpts common;
  std::string kind = "loaded";  // loaded | bare
};

void run_reflect(const ReflectOpts& o) {
  RunContext ctx(o.common, "reflect");
  const SimBundle b = load_bundle(ctx.doc);
  const std::vector<double> axis = make_axis(b.axis);

  CsvTable t;
  t.comments = {
      "model reflection r(omega); measured S11 is its complex conjugate",
      "kind=" + o.kind,
      "kappa_rad_s=" + detail::format_double(b.cavity.kappa),
      "omega_c_rad_s=" + detail::format_double(b.cavity.omega_c)};
  t.columns = {"omega_MHz", "re", "im"};

  if (o.kind == "bare") {
    for (double w : axis) {
      const cdouble r = bare_reflection(b.cavity, w);
      t.rows.push_back({to_MHz(w), r.real(), r.imag()});
    }
  } else if (o.kind == "loaded") {
    const FrequencyDensity rho = bundle_density(b);
    const CouplingDensity cd = bundle_coupling(b);
    SubEnsembleGrid grid = bundle_grid(b, rho, cd);
    // thermal polarization scales every spin count in the linear regime
    for (auto& bin : grid.bins) bin.N_m *= b.sample.polarization;
    grid.g_ens *= std::sqrt(b.sample.polarization);
    for (double w : axis) {
      const cdouble K = K_of_omega(grid, b.dec.gamma_perp, w);
      const cdouble r = reflection_coeff(b.cavity, K, w);
      t.rows.push_back({to_MHz(w), r.real(), r.imag()});
    }
  } else {
    throw validation_error("kind", "must be loaded or bare");
  }
  emit_csv(t, ctx.path("reflect.csv"));
  ctx.finish();
}

// ---------------------------------------------------------------------------
// deembed: recover the spin kernel from measured reflection traces

struct DeembedOpts {
  CommonOpts common;
  std::string s11_path, s11_sat_path;
};

void run_deembed(const DeembedOpts& o) {
  RunContext ctx(o.common, "deembed");
  const SimBundle b = load_bundle(ctx.doc);
  const CsvTable s11 = parse_csv(o.s11_path);
  const CsvTable sat = parse_csv(o.s11_sat_path);
  auto unpack = [](const CsvTable& t, const char* which) {
    if (t.columns != std::vector<std::string>{"omega_MHz", "re", "im"})
      throw validation_error(which,
                             "expected columns omega_MHz, re, im");
    std::pair<std::vector<double>, std::vector<cdouble>> out;
    for (const auto& row : t.rows) {
      out.first.push_back(row[0] * kTwoPiMHz);
      out.second.emplace_back(row[1], row[2]);
    }
    return out;
  };
  const auto [w1, v1] = unpack(s11, "s11");
  const auto [w2, v2] = unpack(sat, "s11_sat");
  if (w1 != w2)
    throw validation_error("s11_sat", "frequency axes differ");

  const DeembedResult res = deembed_K(b.cavity, w1, v1, v2);
  CsvTable t;
  t.comments = {"spin kernel K(omega) recovered from S11 / S11_saturated",
                "flagged: 1 where the inversion was degenerate"};
  t.columns = {"omega_MHz", "K_re_MHz", "K_im_MHz", "flagged"};
  for (std::size_t i = 0; i < w1.size(); ++i) {
    const bool fl = std::find(res.flagged.begin(), res.flagged.end(), i) !=
                    res.flagged.end();
    t.rows.push_back({to_MHz(w1[i]), to_MHz(res.K.value[i].real()),
                      to_MHz(res.K.value[i].imag()), fl ? 1.0 : 0.0});
  }
  emit_csv(t, ctx.path("deembed.csv"));
  ctx.finish();
}

// ---------------------------------------------------------------------------
// simulate / echo2pe / sweep share the assembled grid

struct GridAssembly {
  SimBundle b;
  SubEnsembleGrid grid;
};

GridAssembly assemble(const ConfigDoc& doc) {
  GridAssembly a{load_bundle(doc), {}};
  const FrequencyDensity rho = bundle_density(a.b);
  const CouplingDensity cd = bundle_coupling(a.b);
  a.grid = bundle_grid(a.b, rho, cd);
  return a;
}

std::optional<WorkerPool>& pool_for(int threads) {
  static std::optional<WorkerPool> pool;
  if (!pool) {
    const int n = threads > 0 ? threads : hardware_threads();
    pool.emplace(n);
  }
  return pool;
}

CsvTable trace_table(const TimeTrace& tr, const SimBundle& b) {
  CsvTable t;
  t.comments = {"reflected-field quadratures in sqrt(photons/s)",
                "dt_s=" + detail::format_double(tr.dt),
                "store_stride=" + std::to_string(tr.store_stride),
                "omega_s_rad_s=" + detail::format_double(b.omega_s)};
  t.columns = {"t_us", "Xc", "Pc", "aR_I", "aR_Q"};
  for (std::size_t i = 0; i < tr.t.size(); ++i)
    t.rows.push_back(
        {tr.t[i] * 1e6, tr.X_c[i], tr.P_c[i], tr.aR_I[i], tr.aR_Q[i]});
  return t;
}

struct SimulateOpts {
  CommonOpts common;
  std::string snapshot_list;  // comma-separated times in us
};

void run_simulate(const SimulateOpts& o) {
  RunContext ctx(o.common, "simulate");
  GridAssembly a = assemble(ctx.doc);
  if (!(a.b.sim.t_end > 0.0))
    throw validation_error("simulation.t_end", "must be positive");

  DriveWaveform drive;
  for (const auto& p : a.b.sequence.theta)
    drive.segments.push_back(to_segment(p));
  if (a.b.sequence.refocus.duration > 0.0)
    drive.segments.push_back(to_segment(a.b.sequence.refocus));
  std::sort(drive.segments.begin(), drive.segments.end(),
            [](const DriveSegment& x, const DriveSegment& y) {
              return x.t_start < y.t_start;
            });

  IntegratorSpec spec = a.b.sim;
  if (!o.snapshot_list.empty())
    for (double us : parse_list(o.snapshot_list, "snapshots"))
      spec.snapshot_times.push_back(us * 1e-6);

  auto& pool = pool_for(a.b.threads);
  const TimeTrace tr =
      integrate(a.grid, a.b.cavity, drive, a.b.dec, spec,
                a.b.sample.polarization, pool->size() > 1 ? &*pool : nullptr);
  ctx.manifest.dt = tr.dt;
  ctx.manifest.safety = spec.safety;
  ctx.manifest.store_stride = spec.store_stride;
  ctx.manifest.threads = pool->size();

  emit_csv(trace_table(tr, a.b), ctx.path("trace.csv"));
  for (std::size_t k = 0; k < tr.snapshots.size(); ++k) {
    const auto& [ts, st] = tr.snapshots[k];
    CsvTable s;
    s.comments = {"t_us=" + detail::format_double(ts * 1e6)};
    s.columns = {"delta_over_2pi_MHz", "g_over_2pi_MHz", "N_m",
                 "S_x", "S_y", "S_z"};
    for (std::size_t i = 0; i < a.grid.bins.size(); ++i)
      s.rows.push_back({to_MHz(a.grid.bins[i].delta_m),
                        to_MHz(a.grid.bins[i].g_m), a.grid.bins[i].N_m,
                        st.S_x[i], st.S_y[i], st.S_z[i]});
    emit_csv(s, ctx.path("snapshot_" + std::to_string(k) + ".csv"));
  }
  ctx.finish();
}

struct EchoOpts {
  CommonOpts common;
  bool single_leg = false;
};

void run_echo2pe(const EchoOpts& o) {
  RunContext ctx(o.common, "echo2pe");
  GridAssembly a = assemble(ctx.doc);
  if (!(a.b.sequence.refocus.duration > 0.0))
    throw validation_error("drive", "no refocusing pulse configured");
  const BuiltSequence built = build_2pe(a.b.sequence, a.b.cavity);

  IntegratorSpec spec = a.b.sim;
  if (!(spec.t_end > 0.0))
    spec.t_end =
        *std::max_element(built.echo_times.begin(), built.echo_times.end()) +
        built.window_halfwidth + 5.0 / a.b.cavity.kappa;

  auto& pool = pool_for(a.b.threads);
  WorkerPool* pp = pool->size() > 1 ? &*pool : nullptr;

  TimeTrace tr;
  double mismatch = 0.0, mismatch_scale = 0.0;
  if (a.b.dec.biexp && !o.single_leg) {
    const double r0 = built.refocus_end - a.b.sequence.refocus.duration;
    BiT2Result bi = bi_t2_run(a.grid, a.b.cavity, built.drive, *a.b.dec.biexp,
                              a.b.dec.gamma_par, spec, a.b.sample.polarization,
                              r0, built.refocus_end, pp);
    tr = std::move(bi.combined);
    mismatch = bi.max_field_mismatch;
    mismatch_scale = bi.max_field;
  } else {
    DecoherenceSpec dec = a.b.dec;
    dec.biexp.reset();
    tr = integrate(a.grid, a.b.cavity, built.drive, dec, spec,
                   a.b.sample.polarization, pp);
  }
  ctx.manifest.dt = tr.dt;
  ctx.manifest.safety = spec.safety;
  ctx.manifest.store_stride = spec.store_stride;
  ctx.manifest.threads = pool->size();

  EchoReport rep = detect_echoes(tr, a.b.sequence, built);
  retrieval_efficiency(rep);
  const auto [phase_offset, residuals] = phase_pattern_residuals(rep);

  nlohmann::ordered_json j;
  j["tau_us"] = rep.tau * 1e6;
  j["refocus_phase_rad"] = rep.refocus_phase;
  j["window_halfwidth_us"] = rep.window_halfwidth * 1e6;
  j["baseline"] = {rep.baseline.real(), rep.baseline.imag()};
  j["phase_offset_rad"] = phase_offset;
  if (a.b.dec.biexp && !o.single_leg) {
    j["decay_legs"] = {{"weight_A", a.b.dec.biexp->weight_A},
                       {"weight_B", a.b.dec.biexp->weight_B},
                       {"T2A_us", a.b.dec.biexp->T2A * 1e6},
                       {"T2B_us", a.b.dec.biexp->T2B * 1e6},
                       {"max_field_mismatch", mismatch},
                       {"max_field", mismatch_scale}};
  }
  j["echoes"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rep.echoes.size(); ++i) {
    const auto& e = rep.echoes[i];
    j["echoes"].push_back(
        {{"index", i},
         {"t_input_us", e.t_input * 1e6},
         {"phase_input_rad", e.phase_input},
         {"input_energy_photons", e.input_energy},
         {"t_expected_us", e.t_expected * 1e6},
         {"t_detected_us", e.t_detected * 1e6},
         {"energy_photons", e.energy},
         {"phase_rad", e.phase},
         {"pattern_residual_deg", residuals[i] * 180.0 / constants::pi},
         {"efficiency", e.efficiency}});
  }
  emit_json(j, ctx.path("echo_report.json"));

  emit_csv(trace_table(tr, a.b), ctx.path("trace.csv"));
  CsvTable wt;
  wt.comments = {"detection windows around the expected echo times"};
  wt.columns = {"echo_index", "t_expected_us", "t_lo_us", "t_hi_us"};
  for (std::size_t i = 0; i < built.echo_times.size(); ++i)
    wt.rows.push_back({static_cast<double>(i), built.echo_times[i] * 1e6,
                       (built.echo_times[i] - rep.window_halfwidth) * 1e6,
                       (built.echo_times[i] + rep.window_halfwidth) * 1e6});
  emit_csv(wt, ctx.path("echo_windows.csv"));
  ctx.finish();
}

struct SweepOpts {
  CommonOpts common;
  std::string kind;         // power | tau
  std::string powers_list;  // photons/s
  std::string power_db;     // lo:hi:step in dB relative to the config value
  std::string taus_list;    // us
};

void run_sweep(const SweepOpts& o) {
  RunContext ctx(o.common, "sweep");
  GridAssembly a = assemble(ctx.doc);
  if (!(a.b.sequence.refocus.duration > 0.0))
    throw validation_error("drive", "no refocusing pulse configured");

  auto& pool = pool_for(a.b.threads);
  WorkerPool* pp = pool->size() > 1 ? &*pool : nullptr;
  IntegratorSpec spec = a.b.sim;
  spec.t_end = 0.0;  // per-point auto horizon
  ctx.manifest.safety = spec.safety;
  ctx.manifest.store_stride = spec.store_stride;
  ctx.manifest.threads = pool->size();

  if (o.kind == "power") {
    const double p_ref = a.b.sequence.refocus.amplitude *
                         a.b.sequence.refocus.amplitude;
    std::vector<double> powers;
    if (!o.powers_list.empty()) {
      powers = parse_list(o.powers_list, "powers");
    } else {
      const auto parts = parse_list(
          o.power_db.empty() ? "-30,0,3" : o.power_db, "power-db");
      if (parts.size() != 3 || !(parts[2] > 0.0))
        throw validation_error("power-db", "expected lo,hi,step");
      for (double db = parts[0]; db <= parts[1] + 1e-9; db += parts[2])
        powers.push_back(p_ref * std::pow(10.0, db / 10.0));
    }
    const auto table =
        sweep_refocus_power(a.grid, a.b.cavity, a.b.dec, a.b.sequence, powers,
                            spec, a.b.sample.polarization, pp);
    CsvTable t;
    t.comments = {"echo area against refocusing-pulse power",
                  "reference_power_photons_per_s=" +
                      detail::format_double(p_ref)};
    t.columns = {"power_photons_per_s", "power_dB_rel", "area"};
    for (const auto& pt : table)
      t.rows.push_back({pt.power,
                        pt.power > 0.0 && p_ref > 0.0
                            ? 10.0 * std::log10(pt.power / p_ref)
                            : -300.0,
                        pt.area});
    emit_csv(t, ctx.path("sweep_power.csv"));
  } else if (o.kind == "tau") {
    if (a.b.sequence.theta.size() != 1)
      throw validation_error(
          "drive", "tau sweep expects exactly one stored pulse; use --set "
                   "to trim the sequence or a dedicated config");
    std::vector<double> taus =
        parse_list(o.taus_list.empty() ? "2,5,9,15" : o.taus_list, "taus");
    for (double& tv : taus) tv *= 1e-6;
    std::function<double(double)> f;
    if (a.b.dec.biexp) {
      const BiexpSpec bi = *a.b.dec.biexp;
      f = [bi](double tv) {
        return bi.weight_A * std::exp(-2.0 * tv / bi.T2A) +
               bi.weight_B * std::exp(-2.0 * tv / bi.T2B);
      };
    } else {
      const double T2 = 1.0 / a.b.dec.gamma_perp;
      f = [T2](double tv) { return std::exp(-2.0 * tv / T2); };
    }
    const TauSweep sw =
        sweep_tau(a.grid, a.b.cavity, a.b.dec, a.b.sequence, taus, spec,
                  a.b.sample.polarization, f, pp);
    CsvTable t;
    t.comments = {"retrieval efficiency against storage delay",
                  "prefactor_c=" + detail::format_double(sw.prefactor_c)};
    t.columns = {"tau_us", "two_tau_us", "efficiency", "f_squared"};
    for (const auto& pt : sw.points)
      t.rows.push_back({pt.tau * 1e6, 2.0 * pt.tau * 1e6,
                        pt.report.echoes.front().efficiency,
                        f(pt.tau) * f(pt.tau)});
    emit_csv(t, ctx.path("sweep_tau.csv"));
    std::printf("prefactor c = %.4f\n", sw.prefactor_c);
  } else {
    throw validation_error("kind", "must be power or tau");
  }
  ctx.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spin-ensemble microwave storage simulator"};
  app.require_subcommand(1);

  SpectrumOpts sp;
  auto* c_sp = app.add_subcommand(
      "spectrum", "Transition frequencies against applied field");
  add_common(c_sp, sp.common);
  c_sp->add_option("--b-min", sp.b_min_mT, "Field start, mT");
  c_sp->add_option("--b-max", sp.b_max_mT, "Field end, mT");
  c_sp->add_option("--points", sp.n, "Number of field points");
  c_sp->add_option("--family", sp.family, "tilted or orth");
  c_sp->add_option("--strain", sp.strain_MHz, "Strain splitting E/2pi, MHz");
  c_sp->add_flag("--exact", sp.exact, "Diagonalize instead of closed form");

  DensityOpts de;
  auto* c_de =
      app.add_subcommand("density", "Inhomogeneous spectral density");
  add_common(c_de, de.common);
  c_de->add_option("--family", de.family, "combined, orth or tilted");

  CouplingOpts co;
  auto* c_co =
      app.add_subcommand("coupling", "Coupling histogram from the mode field");
  add_common(c_co, co.common);
  c_co->add_option("--field", co.field_path, "Imported field map file");
  c_co->add_option("--save-field", co.save_field, "Export the field map used");
  c_co->add_flag("--sensitivity", co.sensitivity,
                 "Vary gap and active length, report the coupling shift");

  ReflectOpts re;
  auto* c_re = app.add_subcommand("reflect", "Single-port reflection trace");
  add_common(c_re, re.common);
  c_re->add_option("--kind", re.kind, "loaded or bare");

  DeembedOpts dm;
  auto* c_dm = app.add_subcommand(
      "deembed", "Recover the spin kernel from reflection traces");
  add_common(c_dm, dm.common);
  c_dm->add_option("--s11", dm.s11_path, "Measured reflection CSV")
      ->required();
  c_dm->add_option("--s11-sat", dm.s11_sat_path,
                   "Saturated-ensemble reflection CSV")
      ->required();

  SimulateOpts si;
  auto* c_si =
      app.add_subcommand("simulate", "Integrate the configured drive");
  add_common(c_si, si.common);
  c_si->add_option("--snapshots", si.snapshot_list,
                   "Comma-separated snapshot times, us");

  EchoOpts ec;
  auto* c_ec =
      app.add_subcommand("echo2pe", "Two-pulse-echo storage and retrieval");
  add_common(c_ec, ec.common);
  c_ec->add_flag("--single-leg", ec.single_leg,
                 "Use only the fast decay component");

  SweepOpts sw;
  auto* c_sw = app.add_subcommand("sweep", "Parameter sweeps");
  add_common(c_sw, sw.common);
  c_sw->add_option("--kind", sw.kind, "power or tau")->required();
  c_sw->add_option("--powers", sw.powers_list,
                   "Comma-separated refocusing powers, photons/s");
  c_sw->add_option("--power-db", sw.power_db,
                   "lo,hi,step in dB relative to the configured power");
  c_sw->add_option("--taus", sw.taus_list, "Comma-separated delays, us");

  try {
    app.parse(argc, argv);
    if (c_sp->parsed()) run_spectrum(sp);
    if (c_de->parsed()) run_density(de);
    if (c_co->parsed()) run_coupling(co);
    if (c_re->parsed()) run_reflect(re);
    if (c_dm->parsed()) run_deembed(dm);
    if (c_si->parsed()) run_simulate(si);
    if (c_ec->parsed()) run_echo2pe(ec);
    if (c_sw->parsed()) run_sweep(sw);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
