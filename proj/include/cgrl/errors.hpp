#pragma once

#include <stdexcept>
#include <string>

namespace cgrl {

// Invalid configuration or arguments. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite objective/gradient or other numeric breakdown. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, int iteration)
      : std::runtime_error(what), iteration(iteration) {}
  int iteration = -1;
};

// Filesystem failures. CLI exit code 4.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cgrl
