#pragma once

#include <stdexcept>
#include <string>

namespace wemf {

// Malformed command line or run config. CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable, unsupported, or inconsistent data files. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A numerical check failed: NaN/Inf mid-graph, residue bounds, gradient
// checks. CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace wemf
