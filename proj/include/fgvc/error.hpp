#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgvc {

/// Error classes. The CLI maps each one to its own exit code.
enum class ErrorClass {
  Usage = 2,
  Parse = 3,
  Dataset = 4,
  Format = 5,
  Backend = 6,
  Geometry = 7,
  Dimension = 8,
  Alignment = 9,
  Evaluation = 10,
  Io = 11,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorClass cls, const std::string& what) : std::runtime_error(what), class_(cls) {}
  ErrorClass error_class() const noexcept { return class_; }

 private:
  ErrorClass class_;
};

/// Point-cloud file errors. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  enum class Kind { MalformedHeader, MalformedRecord, NonFiniteCoordinate, EmptyCloud, TooFewPoints };

  ParseError(Kind kind, std::size_t line, const std::string& what);
  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

  /// Same error with `prefix: ` in front of the message.
  ParseError with_context(const std::string& prefix) const;

 private:
  struct Raw {};
  ParseError(Raw, Kind kind, std::size_t line, const std::string& what)
      : Error(ErrorClass::Parse, what), kind_(kind), line_(line) {}

  Kind kind_;
  std::size_t line_;
};

class DatasetError : public Error {
 public:
  enum class Kind { EmptyDataset, DuplicateEntry, Unreadable, Invalid };

  DatasetError(Kind kind, const std::string& what) : Error(ErrorClass::Dataset, what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class DegenerateGeometry : public Error {
 public:
  explicit DegenerateGeometry(const std::string& what) : Error(ErrorClass::Geometry, what) {}
};

/// Bad magic, bad version, malformed trailer, count mismatch.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorClass::Format, what) {}
};

class TruncationError : public FormatError {
 public:
  explicit TruncationError(const std::string& what) : FormatError(what) {}
};

class BackendProtocolError : public Error {
 public:
  BackendProtocolError(const std::string& what, std::string diagnostics)
      : Error(ErrorClass::Backend, what + (diagnostics.empty() ? "" : "\n--- backend stderr ---\n" + diagnostics)),
        diagnostics_(std::move(diagnostics)) {}
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::string diagnostics_;
};

class DimensionMismatch : public Error {
 public:
  explicit DimensionMismatch(const std::string& what) : Error(ErrorClass::Dimension, what) {}
};

class AlignmentError : public Error {
 public:
  AlignmentError(const std::string& what, std::vector<std::string> missing)
      : Error(ErrorClass::Alignment, what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class ZeroVariance : public Error {
 public:
  explicit ZeroVariance(const std::string& what) : Error(ErrorClass::Dimension, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorClass::Usage, what) {}
};

class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& what) : Error(ErrorClass::Evaluation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorClass::Io, what) {}
};

}  // namespace fgvc
