#pragma once

#include <stdexcept>
#include <string>

namespace farm {

// Raised for every contract violation in the library. The message is the
// stable, user-facing part ("no reports in round", "forged attestation", ...).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace farm
