#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "spinecho/constants.hpp"
#include "spinecho/errors.hpp"

namespace spinecho {

// Units accepted by unit_convert. Internally everything is SI with angular
// frequencies; these exist for the boundary only.
enum class unit {
  hertz,
  megahertz,
  rad_per_s,
  millitesla,
  gauss,
  dbm,
  photons_per_s,
};

inline std::string_view unit_name(unit u) {
  switch (u) {
    case unit::hertz: return "Hz";
    case unit::megahertz: return "MHz";
    case unit::rad_per_s: return "rad/s";
    case unit::millitesla: return "mT";
    case unit::gauss: return "Gs";
    case unit::dbm: return "dBm";
    case unit::photons_per_s: return "photons/s";
  }
  return "?";
}

inline unit parse_unit(std::string_view s) {
  if (s == "Hz") return unit::hertz;
  if (s == "MHz") return unit::megahertz;
  if (s == "rad/s") return unit::rad_per_s;
  if (s == "mT") return unit::millitesla;
  if (s == "Gs" || s == "G") return unit::gauss;
  if (s == "dBm") return unit::dbm;
  if (s == "photons/s") return unit::photons_per_s;
  throw parse_error("unknown unit '" + std::string(s) + "'");
}

namespace detail {

// Dimension groups; conversions are defined within a group, plus the
// power pair dBm <-> photons/s which needs a carrier frequency.
enum class dim { frequency, field, power };

inline dim unit_dim(unit u) {
  switch (u) {
    case unit::hertz:
    case unit::megahertz:
    case unit::rad_per_s: return dim::frequency;
    case unit::millitesla:
    case unit::gauss: return dim::field;
    case unit::dbm:
    case unit::photons_per_s: return dim::power;
  }
  return dim::power;
}

// Factor to the group's base unit (rad/s, tesla).
inline double to_base(unit u) {
  switch (u) {
    case unit::hertz: return constants::two_pi;
    case unit::megahertz: return constants::two_pi * 1e6;
    case unit::rad_per_s: return 1.0;
    case unit::millitesla: return 1e-3;
    case unit::gauss: return 1e-4;
    default: return 1.0;
  }
}

}  // namespace detail

// Converts between the boundary units. Power conversions express an incident
// power as a photon flux |beta|^2 = P/(hbar*omega) and need the carrier
// angular frequency; every other pair must share a dimension.
inline double unit_convert(double value, unit from, unit to,
                           double carrier_omega = 0.0) {
  if (from == to) return value;
  const auto df = detail::unit_dim(from);
  const auto dt = detail::unit_dim(to);
  if (df != dt)
    throw validation_error("unit", "no conversion from " +
                                       std::string(unit_name(from)) + " to " +
                                       std::string(unit_name(to)));
  if (df == detail::dim::power) {
    if (!(carrier_omega > 0.0))
      throw validation_error(
          "carrier_omega", "dBm <-> photons/s conversion needs a carrier");
    if (from == unit::dbm) {
      const double watts = 1e-3 * std::pow(10.0, value / 10.0);
      return watts / (constants::hbar * carrier_omega);
    }
    const double watts = value * constants::hbar * carrier_omega;
    return 10.0 * std::log10(watts / 1e-3);
  }
  return value * detail::to_base(from) / detail::to_base(to);
}

}  // namespace spinecho
