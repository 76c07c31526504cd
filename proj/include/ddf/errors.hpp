#pragma once

#include <stdexcept>
#include <string>

namespace ddf {

// Error categories surfaced by the CLI as distinct exit codes.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

struct LineageError : std::runtime_error {
  explicit LineageError(const std::string& m) : std::runtime_error(m) {}
};

struct MissingInputError : std::runtime_error {
  explicit MissingInputError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace ddf
