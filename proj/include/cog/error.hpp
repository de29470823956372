#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace cog {

// Base of every error raised by the library. Validation errors describe bad
// input (exit code 1 in the CLI); everything else is a runtime failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// A line in a JSONL input could not be parsed or failed field validation.
class ParseError : public ValidationError {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what)
      : ValidationError(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

class DuplicateIdError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DanglingReferenceError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionMismatchError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InsufficientNegativesError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class UnknownConceptError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EmptyInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Scorer failures.
class ScorerError : public Error {
 public:
  using Error::Error;
};

class MissingProvenanceError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class TransportError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class MalformedResponseError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

class ScoreRangeError : public ScorerError {
 public:
  using ScorerError::ScorerError;
};

// Wraps the first failing element of a batch.
class BatchError : public ScorerError {
 public:
  BatchError(std::size_t index, const std::string& what)
      : ScorerError("batch element " + std::to_string(index) + ": " + what),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Verification queue failures.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

class AlreadyDecidedError : public Error {
 public:
  using Error::Error;
};

class DuplicateItemError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

}  // namespace cog
