#pragma once

#include <stdexcept>
#include <string>

namespace tcape {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for shape/dimension contract violations.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace tcape
