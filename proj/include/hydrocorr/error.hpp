#pragma once

#include <stdexcept>
#include <string>

namespace hydrocorr {

// Exit-code contract used by the CLI: IoError -> 1, InvalidInput -> 2,
// UnlearnableSeries -> 3.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnlearnableSeries : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hydrocorr
