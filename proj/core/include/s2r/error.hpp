#pragma once

#include <stdexcept>
#include <string>

namespace s2r {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files (corpus lines, stop lists, JSON artifacts).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// A stage was asked to run without the inputs it depends on.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace s2r
