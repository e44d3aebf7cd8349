#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>

namespace dpl {

// Shortest decimal representation that round-trips the double. Keeps output
// files byte-stable across runs.
inline std::string fmt_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string fmt_int(long long x) { return std::to_string(x); }

}  // namespace dpl
