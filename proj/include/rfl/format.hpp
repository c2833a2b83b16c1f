#pragma once

#include <charconv>
#include <string>

namespace rfl {

// Shortest text that reads back to the same double; stable across runs.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

}  // namespace rfl
