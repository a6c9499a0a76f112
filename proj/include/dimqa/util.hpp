#pragma once

#include <charconv>
#include <string>

namespace dimqa {

// Shortest decimal that parses back to the same double.
inline std::string format_double(double value) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

}  // namespace dimqa
