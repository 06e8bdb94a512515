#pragma once

// Minimal streaming JSON emitter for model files. Doubles are written with
// 17 significant digits so that every value round-trips exactly.

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

#include "lveg/error.hpp"

namespace lveg::detail {

inline void json_string(std::string& out, std::string_view s) {
  out += '"';
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  out += '"';
}

inline void json_number(std::string& out, double x) {
  if (!std::isfinite(x)) throw Error("cannot serialize a non-finite number");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  out += buf;
}

inline void json_numbers(std::string& out, std::span<const double> xs) {
  out += '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    json_number(out, xs[i]);
  }
  out += ']';
}

template <class Range>
void json_strings(std::string& out, const Range& names) {
  out += '[';
  bool first = true;
  for (const auto& n : names) {
    if (!first) out += ',';
    first = false;
    json_string(out, n);
  }
  out += ']';
}

}  // namespace lveg::detail
