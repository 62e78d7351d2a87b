#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace cvqkd {

/// Fixed-format floating-point rendering for CSV output: same bytes for the
/// same value on every run, '.' decimal point (no locale involvement).
inline std::string format_double(double v, const char* fmt = "%.12g") {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace cvqkd
