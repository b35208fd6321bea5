#pragma once

#include <stdexcept>
#include <string>

namespace pitlab {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Zero pivot, singular system or a failed implicit solve.
class NumericFailure : public Error {
 public:
  using Error::Error;
};

class ChannelClosed : public Error {
 public:
  using Error::Error;
};

class Diverged : public Error {
 public:
  using Error::Error;
};

class NotConverged : public Error {
 public:
  using Error::Error;
};

class Deadlock : public Error {
 public:
  using Error::Error;
};

/// Malformed trace file; carries the offending line number (1-based).
class TraceParseError : public Error {
 public:
  TraceParseError(std::size_t line, const std::string& what)
      : Error("trace line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Unbalanced region nesting or unmatched communication events.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class AnalysisError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SubstitutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace pitlab
