#pragma once

#include <stdexcept>
#include <string>

namespace mcoco {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on arguments or shapes was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An on-disk file (dataset, checkpoint, config) is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine hit an input it cannot handle (e.g. an all-zero
/// sharpened row).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace detail
}  // namespace mcoco
