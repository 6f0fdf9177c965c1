#pragma once

#include <charconv>
#include <cstdio>
#include <string>
#include <system_error>

#include "spinecho/errors.hpp"

namespace spinecho::detail {

// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc{})
    throw numeric_error("failed to format floating-point value");
  return std::string(buf, res.ptr);
}

// Fixed 17 significant digits; enough to reconstruct any double exactly.
inline std::string format_double_17(double v) {
  char buf[48];
  auto res =
      std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  if (res.ec != std::errc{})
    throw numeric_error("failed to format floating-point value");
  return std::string(buf, res.ptr);
}

}  // namespace spinecho::detail
