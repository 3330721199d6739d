#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace frisbi {

/// Exception carrying a short machine-checkable code ("shape", "bad-gamma", ...)
/// next to the human-readable message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(code + ": " + what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

}  // namespace frisbi
