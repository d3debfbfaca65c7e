#pragma once

#include <stdexcept>
#include <string>

namespace alsim {

// Malformed input text (config syntax, JSONL line, ...).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Well-formed input that violates a documented constraint.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An artifact failed its digest check, was truncated, or has the wrong layout.
class CorruptArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace alsim
