#pragma once

#include <cstdio>
#include <string>

namespace nailguard {

/// Shortest "%g"-style rendering with the given significant digits.
inline std::string format_real(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

}  // namespace nailguard
