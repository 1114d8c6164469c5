#pragma once

#include <stdexcept>

namespace inkwash {

/// I/O failure: unreadable or unwritable files, malformed containers.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Contract violation: invalid parameters or mismatched shapes.
struct ValueError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values where finite ones are required (diverged optimization).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace inkwash
