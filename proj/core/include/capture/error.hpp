#pragma once

#include <stdexcept>
#include <string>

namespace capture {

// Base of every error raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI and the HTTP service.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid-argument", what) {}
};

class UnknownId : public Error {
 public:
  explicit UnknownId(const std::string& what) : Error("unknown-id", what) {}
};

class ModelLoadError : public Error {
 public:
  explicit ModelLoadError(const std::string& what) : Error("model-load", what) {}
};

// Raised when an operation needs input gradients from an adapter that
// cannot provide them.
class CapabilityError : public Error {
 public:
  explicit CapabilityError(const std::string& what) : Error("capability", what) {}
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& what) : Error("geometry", what) {}
};

// The asset store lacks assets needed to assemble a challenge.
class ShortageError : public Error {
 public:
  explicit ShortageError(const std::string& what) : Error("shortage", what) {}
};

// A session that was already answered or expired.
class SessionClosed : public Error {
 public:
  explicit SessionClosed(const std::string& what) : Error("session-closed", what) {}
};

// A session submitted after its time-to-live ran out.
class SessionExpired : public Error {
 public:
  explicit SessionExpired(const std::string& what) : Error("session-expired", what) {}
};

// Unreadable or invalid configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

}  // namespace capture
