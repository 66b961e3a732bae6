#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace deltalag {

// Shortest round-trip decimal form; NaN and infinities become an empty field.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return {};
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace deltalag
