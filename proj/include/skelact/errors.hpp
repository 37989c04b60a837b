#pragma once

#include <stdexcept>
#include <string>

namespace skelact {

// Error taxonomy mirroring the CLI exit codes: usage (1), data (2),
// numerical (3). Everything the library throws derives from one of these.

class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Shape mismatches in tensor ops or model wiring.
class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& what) : DataError(what) {}
};

}  // namespace skelact
