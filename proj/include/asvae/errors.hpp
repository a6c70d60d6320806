// Error types shared by every asvae module.
#pragma once

#include <stdexcept>
#include <string>

namespace asvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of a
/// non-positive value, pixel outside 0..255, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an interface contract (non-scalar backward root, wrong
/// pair provenance, mismatched tapes).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Operation not valid in the object's current state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced while checked mode is on, or a training loss diverged.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Failure reading or writing a file; the kind names what went wrong.
class FormatError : public Error {
 public:
  enum class Kind { Io, BadMagic, Version, Truncated, Checksum, Malformed };

  FormatError(Kind kind, const std::string& what)
      : Error(std::string(kind_name(kind)) + ": " + what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

  static const char* kind_name(Kind k) noexcept {
    switch (k) {
      case Kind::Io: return "io error";
      case Kind::BadMagic: return "bad magic";
      case Kind::Version: return "version mismatch";
      case Kind::Truncated: return "truncated file";
      case Kind::Checksum: return "checksum failure";
      case Kind::Malformed: return "malformed file";
    }
    return "format error";
  }

 private:
  Kind kind_;
};

}  // namespace asvae
