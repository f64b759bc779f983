#pragma once

#include <stdexcept>
#include <string>

namespace dami {

/// Raised for every contract violation detected at runtime: malformed input
/// files, shape mismatches, invalid configuration values.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dami
