#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tproj {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file content. Carries the 1-based line (or item offset).
class FormatError : public Error {
 public:
  FormatError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Invalid configuration: unknown category, bad category map, bad flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A violated precondition of a library call.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Backend could not be reached or answered with a server-side failure.
// Callers may retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Backend answered but rejected the request or broke its contract.
class BackendError : public Error {
 public:
  using Error::Error;
};

// A similarity that is undefined for the given inputs, e.g. a zero
// self-probability normalizer or a zero embedding vector.
class DegenerateScore : public Error {
 public:
  using Error::Error;
};

}  // namespace tproj
