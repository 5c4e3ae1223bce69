#pragma once

#include <stdexcept>
#include <string>

namespace panconf {

// Precondition and invariant violations are reported as std::invalid_argument.
// Anything that went wrong while touching the filesystem, including malformed
// files, is an IoError.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public IoError {
 public:
  using IoError::IoError;
};

}  // namespace panconf
