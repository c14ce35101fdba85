#pragma once

#include <cstdio>
#include <string>

namespace unroll {

// Round-trip-exact double formatting for CSV/JSON-adjacent text output.
inline std::string fmt_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Short display formatting (plots, logs).
inline std::string fmt_g6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

}  // namespace unroll
