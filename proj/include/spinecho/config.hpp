#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spinecho/constants.hpp"
#include "spinecho/errors.hpp"

namespace spinecho {

// ---------------------------------------------------------------------------
// Sectioned key = value configuration text.
//
//   [cavity]
//   omega_c = 2.88 GHz   # angular frequency, unit suffix required
//
// Values keep their raw text so a parse/serialize round trip is exact; the
// typed getters convert at the call site and name the offending entry when
// something is off.

struct ConfigEntry {
  std::string section, key, value;
  int line = 0;
};

class ConfigDoc {
 public:
  static ConfigDoc parse(const std::string& text,
                         const std::string& origin = "<config>") {
    ConfigDoc doc;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view sv = trim(strip_comment(line));
      if (sv.empty()) continue;
      if (sv.front() == '[') {
        if (sv.back() != ']')
          throw parse_error(origin + ":" + std::to_string(lineno) +
                            ": unterminated section header");
        section = std::string(trim(sv.substr(1, sv.size() - 2)));
        if (section.empty() || !valid_name(section, true))
          throw parse_error(origin + ":" + std::to_string(lineno) +
                            ": bad section name");
        if (std::find(doc.section_order_.begin(), doc.section_order_.end(),
                      section) == doc.section_order_.end())
          doc.section_order_.push_back(section);
        continue;
      }
      const auto eq = sv.find('=');
      if (eq == std::string_view::npos)
        throw parse_error(origin + ":" + std::to_string(lineno) +
                          ": expected key = value");
      const std::string key(trim(sv.substr(0, eq)));
      const std::string value(trim(sv.substr(eq + 1)));
      if (key.empty() || !valid_name(key, false))
        throw parse_error(origin + ":" + std::to_string(lineno) +
                          ": bad key name");
      if (value.empty())
        throw parse_error(origin + ":" + std::to_string(lineno) +
                          ": empty value for " + key);
      if (section.empty())
        throw parse_error(origin + ":" + std::to_string(lineno) +
                          ": key outside any section");
      if (doc.find(section, key))
        throw parse_error(origin + ":" + std::to_string(lineno) +
                          ": duplicate key " + section + "." + key);
      doc.entries_.push_back({section, key, value, lineno});
    }
    return doc;
  }

  static ConfigDoc parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
  }

  const ConfigEntry* find(std::string_view section,
                          std::string_view key) const {
    for (const auto& e : entries_)
      if (e.section == section && e.key == key) return &e;
    return nullptr;
  }

  std::vector<const ConfigEntry*> section_entries(
      std::string_view section) const {
    std::vector<const ConfigEntry*> out;
    for (const auto& e : entries_)
      if (e.section == section) out.push_back(&e);
    return out;
  }

  const std::vector<std::string>& sections() const { return section_order_; }

  std::vector<std::string> sections_with_prefix(
      const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& s : section_order_)
      if (s.rfind(prefix, 0) == 0) out.push_back(s);
    return out;
  }

  void set(const std::string& section, const std::string& key,
           const std::string& value) {
    if (!valid_name(section, true) || !valid_name(key, false) || value.empty())
      throw validation_error("override", "bad section/key/value");
    for (auto& e : entries_)
      if (e.section == section && e.key == key) {
        e.value = value;
        return;
      }
    if (std::find(section_order_.begin(), section_order_.end(), section) ==
        section_order_.end())
      section_order_.push_back(section);
    // keep the section's entries contiguous so serialize stays tidy
    auto it = entries_.end();
    for (auto p = entries_.begin(); p != entries_.end(); ++p)
      if (p->section == section) it = p + 1;
    entries_.insert(it, {section, key, value, 0});
  }

  // "section.key=value"; the key is everything after the last dot.
  void apply_override(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos)
      throw validation_error("override",
                             "expected section.key=value in '" + spec + "'");
    const std::string lhs(trim(std::string_view(spec).substr(0, eq)));
    const std::string value(trim(std::string_view(spec).substr(eq + 1)));
    const auto dot = lhs.rfind('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == lhs.size())
      throw validation_error("override",
                             "expected section.key=value in '" + spec + "'");
    set(lhs.substr(0, dot), lhs.substr(dot + 1), value);
  }

  // Canonical form: sections in first-appearance order, one blank line
  // between them, comments dropped.
  std::string serialize() const {
    std::ostringstream os;
    bool first = true;
    for (const auto& s : section_order_) {
      if (!first) os << "\n";
      first = false;
      os << "[" << s << "]\n";
      for (const auto& e : entries_)
        if (e.section == s) os << e.key << " = " << e.value << "\n";
    }
    return os.str();
  }

  // -------------------------------------------------------------------------
  // Typed getters. Unit suffixes are separated by whitespace.

  double number(std::string_view sec, std::string_view key) const {
    auto [num, unit] = split_value(require(sec, key));
    if (!unit.empty())
      throw validation_error(name(sec, key),
                             "expected a bare number, got unit '" +
                                 std::string(unit) + "'");
    return num;
  }
  double number_or(std::string_view sec, std::string_view key,
                   double fallback) const {
    return find(sec, key) ? number(sec, key) : fallback;
  }

  bool flag(std::string_view sec, std::string_view key, bool fallback) const {
    const ConfigEntry* e = find(sec, key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    throw validation_error(name(sec, key), "expected true or false");
  }

  std::string str(std::string_view sec, std::string_view key) const {
    return require(sec, key).value;
  }
  std::string str_or(std::string_view sec, std::string_view key,
                     const std::string& fallback) const {
    const ConfigEntry* e = find(sec, key);
    return e ? e->value : fallback;
  }

  // Angular frequency in rad/s; Hz-family suffixes include the 2 pi.
  double angular_freq(std::string_view sec, std::string_view key) const {
    return with_unit(sec, key,
                     {{"GHz", constants::two_pi * 1e9},
                      {"MHz", constants::two_pi * 1e6},
                      {"kHz", constants::two_pi * 1e3},
                      {"Hz", constants::two_pi},
                      {"rad/s", 1.0}});
  }
  double angular_freq_or(std::string_view sec, std::string_view key,
                         double fallback) const {
    return find(sec, key) ? angular_freq(sec, key) : fallback;
  }

  double time_s(std::string_view sec, std::string_view key) const {
    return with_unit(
        sec, key, {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}});
  }
  double time_s_or(std::string_view sec, std::string_view key,
                   double fallback) const {
    return find(sec, key) ? time_s(sec, key) : fallback;
  }

  double field_T(std::string_view sec, std::string_view key) const {
    return with_unit(
        sec, key,
        {{"T", 1.0}, {"mT", 1e-3}, {"uT", 1e-6}, {"Gs", 1e-4}, {"G", 1e-4}});
  }
  double field_T_or(std::string_view sec, std::string_view key,
                    double fallback) const {
    return find(sec, key) ? field_T(sec, key) : fallback;
  }

  double length_m(std::string_view sec, std::string_view key) const {
    return with_unit(
        sec, key, {{"m", 1.0}, {"mm", 1e-3}, {"um", 1e-6}, {"nm", 1e-9}});
  }
  double length_m_or(std::string_view sec, std::string_view key,
                     double fallback) const {
    return find(sec, key) ? length_m(sec, key) : fallback;
  }

  double angle_rad(std::string_view sec, std::string_view key) const {
    return with_unit(sec, key,
                     {{"rad", 1.0}, {"deg", constants::pi / 180.0}});
  }

  double rate_per_s(std::string_view sec, std::string_view key) const {
    return with_unit(sec, key,
                     {{"per_s", 1.0}, {"per_ms", 1e3}, {"per_us", 1e6}});
  }
  double rate_per_s_or(std::string_view sec, std::string_view key,
                       double fallback) const {
    return find(sec, key) ? rate_per_s(sec, key) : fallback;
  }

  // Incident photon flux |beta|^2; dBm needs the carrier to convert.
  double photon_flux(std::string_view sec, std::string_view key,
                     double carrier_omega) const {
    auto [num, unit] = split_value(require(sec, key));
    if (unit == "photons/s") return num;
    if (unit == "dBm") {
      if (!(carrier_omega > 0.0))
        throw validation_error(name(sec, key),
                               "dBm needs a positive carrier frequency");
      return 1e-3 * std::pow(10.0, num / 10.0) /
             (constants::hbar * carrier_omega);
    }
    throw validation_error(name(sec, key),
                           "expected photons/s or dBm, got '" +
                               std::string(unit) + "'");
  }

  // Field amplitude sqrt(|beta|^2).
  double amplitude(std::string_view sec, std::string_view key) const {
    auto [num, unit] = split_value(require(sec, key));
    if (unit != "sqrt_photons/s")
      throw validation_error(
          name(sec, key),
          "expected sqrt_photons/s, got '" + std::string(unit) + "'");
    if (num < 0.0)
      throw validation_error(name(sec, key), "must be non-negative");
    return num;
  }

 private:
  static std::string_view strip_comment(std::string_view sv) {
    const auto pos = sv.find('#');
    return pos == std::string_view::npos ? sv : sv.substr(0, pos);
  }
  static std::string_view trim(std::string_view sv) {
    while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.front())))
      sv.remove_prefix(1);
    while (!sv.empty() && std::isspace(static_cast<unsigned char>(sv.back())))
      sv.remove_suffix(1);
    return sv;
  }
  static bool valid_name(std::string_view s, bool allow_dot) {
    if (s.empty()) return false;
    for (char c : s) {
      const bool ok = std::isalnum(static_cast<unsigned char>(c)) ||
                      c == '_' || (allow_dot && c == '.');
      if (!ok) return false;
    }
    return true;
  }
  static std::string name(std::string_view sec, std::string_view key) {
    return std::string(sec) + "." + std::string(key);
  }
  const ConfigEntry& require(std::string_view sec, std::string_view key) const {
    const ConfigEntry* e = find(sec, key);
    if (!e) throw validation_error(name(sec, key), "missing required key");
    return *e;
  }
  static std::pair<double, std::string_view> split_value(
      const ConfigEntry& e) {
    std::string_view sv = e.value;
    auto ws = sv.find_first_of(" \t");
    std::string_view num_tok = ws == std::string_view::npos ? sv : sv.substr(0, ws);
    std::string_view unit_tok =
        ws == std::string_view::npos ? std::string_view{} : trim(sv.substr(ws));
    double v = 0.0;
    const char* b = num_tok.data();
    const char* end = num_tok.data() + num_tok.size();
    auto res = std::from_chars(b, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
      throw validation_error(name(e.section, e.key),
                             "bad number '" + std::string(num_tok) + "'");
    return {v, unit_tok};
  }
  double with_unit(
      std::string_view sec, std::string_view key,
      std::initializer_list<std::pair<const char*, double>> table) const {
    auto [num, unit] = split_value(require(sec, key));
    for (const auto& [uname, factor] : table)
      if (unit == uname) return num * factor;
    std::string allowed;
    for (const auto& [uname, factor] : table) {
      (void)factor;
      if (!allowed.empty()) allowed += ", ";
      allowed += uname;
    }
    throw validation_error(name(sec, key), "expected a unit from {" + allowed +
                                               "}, got '" +
                                               std::string(unit) + "'");
  }

  std::vector<ConfigEntry> entries_;
  std::vector<std::string> section_order_;
};

}  // namespace spinecho
