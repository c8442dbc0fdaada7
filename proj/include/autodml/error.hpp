#pragma once

#include <stdexcept>
#include <string>

namespace autodml {

// Base of every error raised by the library. The CLI maps ValidationError to
// exit code 2 and NumericalError to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad tables, schema mismatches, out-of-range codes.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A solve or estimate that cannot be completed on valid input.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace autodml
