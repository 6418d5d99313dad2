#pragma once

#include <stdexcept>
#include <string>

namespace xlre {

// Bad input (file contents, config values, argument ranges). The CLI maps
// this to exit code 1; every other exception maps to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace xlre
