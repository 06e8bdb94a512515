#pragma once

#include <stdexcept>
#include <string>

namespace lveg {

// All library failures derive from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error { using Error::Error; };
struct LookupError : Error { using Error::Error; };
struct InputError : Error { using Error::Error; };
struct ParseError : InputError { using InputError::InputError; };
struct ConfigError : Error { using Error::Error; };
struct CoverageError : Error { using Error::Error; };
struct NoParseError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };

}  // namespace lveg
