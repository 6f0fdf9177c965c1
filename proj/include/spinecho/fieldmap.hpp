#pragma once

#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/detail/format.hpp"
#include "spinecho/types.hpp"

namespace spinecho {

struct FieldPoint {
  double x = 0.0, y = 0.0, z = 0.0;     // m
  double Bx = 0.0, By = 0.0, Bz = 0.0;  // tesla at the single-photon current
};

struct FieldMap {
  enum class Source { imported, analytic_wire };
  std::vector<FieldPoint> points;
  double cell_volume = 0.0;    // m^3 per point
  double current = 0.0;        // A, normalization the fields are scaled to
  Source source = Source::imported;
};

inline const FieldMap& validate(const FieldMap& m) {
  if (m.points.empty()) throw validation_error("points", "field map is empty");
  if (!(m.cell_volume > 0.0))
    throw validation_error("cell_volume", "must be positive");
  for (const auto& p : m.points)
    if (!std::isfinite(p.Bx) || !std::isfinite(p.By) || !std::isfinite(p.Bz))
      throw validation_error("points", "non-finite field value");
  return m;
}

// Single-photon rms current of the resonator mode.
inline double vacuum_current(const CavityParams& c) {
  return c.omega_c * std::sqrt(constants::hbar / (2.0 * c.char_impedance_Z0));
}

// Meander inductor reduced to parallel straight wires along z in the chip
// plane y = 0, with alternating current direction. Strips are subdivided
// into filaments; an odd wire count keeps the layout mirror-symmetric in x,
// which is what makes families 1/2 (and 3/4) equivalent.
struct WireGeometry {
  int n_wires = 9;
  double pitch = 10e-6;        // m, center-to-center
  double wire_width = 5e-6;    // m
  int n_filaments = 16;
  double active_length = 100e-6;  // m, extent along the wires
  double gap = 0.7e-6;         // m, chip-to-crystal spacing
  double sample_height = 0.0;  // m above the gap; 0 -> 6 pitches
  double sample_halfwidth = 0.0;  // m; 0 -> array halfwidth + 4 pitches
};

inline const WireGeometry& validate(const WireGeometry& w) {
  if (w.n_wires < 1) throw validation_error("n_wires", "must be >= 1");
  if (!(w.pitch > 0.0)) throw validation_error("pitch", "must be positive");
  if (!(w.wire_width > 0.0) || w.wire_width > w.pitch)
    throw validation_error("wire_width", "must be in (0, pitch]");
  if (w.n_filaments < 1)
    throw validation_error("n_filaments", "must be >= 1");
  if (!(w.active_length > 0.0))
    throw validation_error("active_length", "must be positive");
  if (!(w.gap > 0.0)) throw validation_error("gap", "must be positive");
  return w;
}

struct FieldGridSpec {
  double dx = 0.25e-6;  // m
  double dy = 0.25e-6;  // m
};

// Biot-Savart field of the wire array at the single-photon current, sampled
// on a 2-D grid over the crystal cross-section. The field of an infinite
// straight wire has no component along the wire, so Bz = 0 throughout.
inline FieldMap analytic_wire_field(const WireGeometry& geom,
                                    const CavityParams& cavity,
                                    const FieldGridSpec& grid = {}) {
  validate(geom);
  const double dI = vacuum_current(cavity);
  const double array_halfwidth =
      0.5 * (geom.n_wires - 1) * geom.pitch + 0.5 * geom.wire_width;
  const double half_w = geom.sample_halfwidth > 0.0
                            ? geom.sample_halfwidth
                            : array_halfwidth + 4.0 * geom.pitch;
  const double height =
      geom.sample_height > 0.0 ? geom.sample_height : 6.0 * geom.pitch;

  std::vector<double> fil_x, fil_I;
  for (int w = 0; w < geom.n_wires; ++w) {
    const double xc = (w - 0.5 * (geom.n_wires - 1)) * geom.pitch;
    const double I0 = ((w & 1) ? -dI : dI) / geom.n_filaments;
    for (int f = 0; f < geom.n_filaments; ++f) {
      fil_x.push_back(xc + geom.wire_width *
                               ((f + 0.5) / geom.n_filaments - 0.5));
      fil_I.push_back(I0);
    }
  }

  FieldMap map;
  map.source = FieldMap::Source::analytic_wire;
  map.current = dI;
  map.cell_volume = grid.dx * grid.dy * geom.active_length;
  const int n_x = static_cast<int>(std::floor(2.0 * half_w / grid.dx)) + 1;
  const int n_y = static_cast<int>(std::floor(height / grid.dy)) + 1;
  map.points.reserve(static_cast<std::size_t>(n_x) * n_y);
  const double pref = constants::mu0 / (2.0 * constants::pi);
  for (int iy = 0; iy < n_y; ++iy) {
    const double y = geom.gap + (iy + 0.5) * grid.dy;
    for (int ix = 0; ix < n_x; ++ix) {
      const double x = -half_w + (ix + 0.5) * grid.dx;
      double bx = 0.0, by = 0.0;
      for (std::size_t k = 0; k < fil_x.size(); ++k) {
        const double rx = x - fil_x[k];
        const double r2 = rx * rx + y * y;
        const double s = pref * fil_I[k] / r2;
        bx -= s * y;
        by += s * rx;
      }
      map.points.push_back({x, y, 0.0, bx, by, 0.0});
    }
  }
  return map;
}

inline void save_field_map(const FieldMap& map, const std::string& path) {
  validate(map);
  std::ofstream f(path);
  if (!f) throw parse_error("cannot open '" + path + "' for writing");
  f << "# fieldmap cell_volume_m3=" << detail::format_double(map.cell_volume)
    << " current_A=" << detail::format_double(map.current) << " source="
    << (map.source == FieldMap::Source::analytic_wire ? "analytic-wire"
                                                      : "imported")
    << "\n";
  f << "# columns: x_um y_um z_um Bx By Bz\n";
  for (const auto& p : map.points) {
    f << detail::format_double(p.x * 1e6) << ' '
      << detail::format_double(p.y * 1e6) << ' '
      << detail::format_double(p.z * 1e6) << ' '
      << detail::format_double(p.Bx) << ' ' << detail::format_double(p.By)
      << ' ' << detail::format_double(p.Bz) << '\n';
  }
  if (!f) throw parse_error("write to '" + path + "' failed");
}

inline FieldMap load_field_map(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw parse_error("cannot open field map '" + path + "'");
  FieldMap map;
  bool have_header = false;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& why) {
    throw parse_error(path + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream h(line.substr(1));
      std::string tok;
      while (h >> tok) {
        auto grab = [&](const char* key) -> const char* {
          const std::size_t n = std::string(key).size();
          return tok.compare(0, n, key) == 0 ? tok.c_str() + n : nullptr;
        };
        if (const char* v = grab("cell_volume_m3="))
          map.cell_volume = std::strtod(v, nullptr), have_header = true;
        else if (const char* v2 = grab("current_A="))
          map.current = std::strtod(v2, nullptr);
        else if (const char* v3 = grab("source="))
          map.source = std::string(v3) == "analytic-wire"
                           ? FieldMap::Source::analytic_wire
                           : FieldMap::Source::imported;
      }
      continue;
    }
    FieldPoint p;
    std::istringstream row(line);
    double xu, yu, zu;
    if (!(row >> xu >> yu >> zu >> p.Bx >> p.By >> p.Bz))
      fail("expected 6 numeric columns");
    std::string extra;
    if (row >> extra) fail("trailing content '" + extra + "'");
    p.x = xu * 1e-6;
    p.y = yu * 1e-6;
    p.z = zu * 1e-6;
    map.points.push_back(p);
  }
  lineno = 0;
  if (!have_header)
    throw parse_error(path + ": missing cell-volume header line");
  if (map.points.empty()) throw parse_error(path + ": no field points");
  return validate(map), map;
}

}  // namespace spinecho
