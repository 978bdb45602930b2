#pragma once

#include <stdexcept>
#include <string>

namespace scalelab {

/// Base error for the library. CLI maps these to machine-readable JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error("parse", m) {}
};
struct InvariantError : Error {
  explicit InvariantError(const std::string& m) : Error("invariant", m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error("numeric", m) {}
};

}  // namespace scalelab
