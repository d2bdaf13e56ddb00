#pragma once

#include <stdexcept>
#include <string>

namespace srl {

// Error taxonomy mirrored by the CLI exit codes:
// usage errors -> 1, data/config/io errors -> 2, numeric aborts -> 3.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace srl
