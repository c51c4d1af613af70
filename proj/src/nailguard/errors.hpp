#pragma once

#include <stdexcept>
#include <string>

namespace nailguard {

/// Base of every error thrown by the library. The C API maps each subclass
/// onto a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

/// Image bytes that could not be decoded. Carries the sample id when known.
class DecodeError : public Error {
 public:
  DecodeError(std::string sample_id, const std::string& what)
      : Error(sample_id.empty() ? what : sample_id + ": " + what),
        sample_id_(std::move(sample_id)) {}

  const std::string& sample_id() const noexcept { return sample_id_; }

 private:
  std::string sample_id_;
};

/// NaN/Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Misconfiguration: unresolved layers, taxonomy mismatches, missing weights.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// State-machine violation, e.g. reviewing an already reviewed case.
class Conflict : public Error {
 public:
  using Error::Error;
};

/// A required resource (such as an active model) is not available.
class Unavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace nailguard
