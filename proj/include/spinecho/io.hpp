#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spinecho/detail/format.hpp"
#include "spinecho/errors.hpp"

namespace spinecho {

inline constexpr const char* kVersionTag = "0.3.0";

// ---------------------------------------------------------------------------
// CSV

// Numeric table with a fixed column order and optional `# key=value` header
// lines. Floats are written with 17 significant digits so a read-back is
// exact; anything non-finite is rejected before a byte is written.
struct CsvTable {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

namespace detail {

inline double parse_double_strict(std::string_view tok, const char* where) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e)
    throw parse_error(std::string(where) + ": bad number '" +
                      std::string(tok) + "'");
  return v;
}

}  // namespace detail

inline void emit_csv(const CsvTable& table, const std::string& path) {
  if (table.columns.empty())
    throw validation_error("columns", "table has no columns");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.columns.size())
      throw validation_error("rows", "row " + std::to_string(r) +
                                         " does not match the column count");
    for (double v : table.rows[r])
      if (!std::isfinite(v))
        throw numeric_error("non-finite value in row " + std::to_string(r) +
                            " of " + path);
  }
  std::ostringstream os;
  for (const auto& c : table.comments) os << "# " << c << "\n";
  for (std::size_t j = 0; j < table.columns.size(); ++j)
    os << (j ? "," : "") << table.columns[j];
  os << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t j = 0; j < row.size(); ++j)
      os << (j ? "," : "") << detail::format_double_17(row[j]);
    os << "\n";
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw parse_error("cannot open " + path + " for writing");
  out << os.str();
  if (!out) throw parse_error("write failed: " + path);
}

inline CsvTable parse_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open " + path);
  CsvTable t;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::size_t start = line.size() > 1 && line[1] == ' ' ? 2 : 1;
      t.comments.push_back(line.substr(start));
      continue;
    }
    std::vector<std::string_view> toks;
    std::string_view sv = line;
    while (true) {
      const auto pos = sv.find(',');
      toks.push_back(sv.substr(0, pos));
      if (pos == std::string_view::npos) break;
      sv.remove_prefix(pos + 1);
    }
    if (!have_header) {
      for (auto tok : toks) t.columns.emplace_back(tok);
      have_header = true;
      continue;
    }
    if (toks.size() != t.columns.size())
      throw parse_error(path + ":" + std::to_string(lineno) +
                        ": wrong field count");
    std::vector<double> row;
    row.reserve(toks.size());
    const std::string where = path + ":" + std::to_string(lineno);
    for (auto tok : toks)
      row.push_back(detail::parse_double_strict(tok, where.c_str()));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw parse_error(path + ": no header row");
  return t;
}

// ---------------------------------------------------------------------------
// JSON

inline void emit_json(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw parse_error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw parse_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Run manifests

// FNV-1a over the canonical config text; stable across platforms.
inline std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  static const char* hex = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = hex[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

struct RunManifest {
  std::string subcommand;
  std::string config_path;
  std::string config_hash;  // fnv1a of the serialized config
  std::vector<std::string> overrides;
  std::vector<std::string> outputs;
  double dt = 0.0;
  double safety = 0.0;
  int store_stride = 0;
  int threads = 1;
  double wall_time_s = 0.0;
  std::string version = kVersionTag;
};

// One manifest sits next to every output set, named after the subcommand.
inline std::string write_manifest(const RunManifest& m,
                                  const std::string& out_dir) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["subcommand"] = m.subcommand;
  j["config_path"] = m.config_path;
  j["config_hash"] = m.config_hash;
  j["overrides"] = m.overrides;
  j["outputs"] = m.outputs;
  j["integrator"] = {{"dt", m.dt},
                     {"safety", m.safety},
                     {"store_stride", m.store_stride},
                     {"threads", m.threads}};
  j["wall_time_s"] = m.wall_time_s;
  const auto path =
      (std::filesystem::path(out_dir) / (m.subcommand + "_manifest.json"))
          .string();
  emit_json(j, path);
  return path;
}

}  // namespace spinecho
