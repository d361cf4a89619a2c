#pragma once

#include <stdexcept>
#include <string>

namespace scg {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct IndexError : Error {
  using Error::Error;
};
struct PreconditionError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

} // namespace scg
