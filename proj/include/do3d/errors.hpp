#pragma once

#include <stdexcept>
#include <string>

namespace do3d {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents. The message names the byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// An argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Inputs that disagree with each other (dimensions, ids).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A point at or behind the camera plane was projected.
class BehindCameraError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Reductions over an empty set (no valid pixels, empty region).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Invalid scene description; the message carries the JSON field path.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Optimization produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& stage, int iteration)
      : Error("loss diverged in stage '" + stage + "' at iteration " +
              std::to_string(iteration)),
        stage_(stage),
        iteration_(iteration) {}
  const std::string& stage() const { return stage_; }
  int iteration() const { return iteration_; }

 private:
  std::string stage_;
  int iteration_;
};

}  // namespace do3d
