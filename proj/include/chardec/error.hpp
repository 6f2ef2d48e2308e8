#ifndef CHARDEC_ERROR_HPP
#define CHARDEC_ERROR_HPP

#include <stdexcept>
#include <string>

namespace chardec {

// Error taxonomy mirrored by the CLI exit codes: config/usage -> 1,
// shape/data -> 2, numeric failure -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

}  // namespace chardec

#endif
