#pragma once

#include <stdexcept>
#include <string>

namespace dosesens {

// Base class for every error raised by the library. Precondition violations
// on user data are reported through this type so callers can catch a single
// family; programming errors still surface as std::logic_error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input text could not be parsed (design CSV, statistic spec, program text).
class ParseError : public Error {
 public:
  using Error::Error;
};

// An enumeration would exceed its configured size cap.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

// Inputs are well formed but the requested computation is undefined for them.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace dosesens
