#pragma once

#include <stdexcept>
#include <string>

namespace visurf {

// Error taxonomy used across the library. The CLI maps each type to a
// distinct exit code and a one-line "error: <category>: ..." diagnostic.

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace visurf
