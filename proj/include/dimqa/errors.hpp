#pragma once

#include <stdexcept>

namespace dimqa {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dimqa
