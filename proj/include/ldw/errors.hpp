#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ldw {

// Base of every error raised by the library. Callers that only need a
// message catch this; the subclasses carry the failure kind.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message) : std::runtime_error(message), message_(message) {}

  const char* what() const noexcept override { return message_.c_str(); }

  // Failure kind, e.g. "IoFailure".
  virtual const char* kind() const noexcept { return "Error"; }

  // Prefixes where the failure happened, e.g. "driver d3, fold 2". Rethrow
  // with `throw;` to keep the dynamic type.
  void add_context(const std::string& context) { message_ = context + ": " + message_; }

 private:
  std::string message_;
};

#define LDW_DEFINE_ERROR(Name)                                      \
  class Name : public Error {                                       \
   public:                                                          \
    using Error::Error;                                             \
    const char* kind() const noexcept override { return #Name; }    \
  };

// numerics
LDW_DEFINE_ERROR(SingularCovariance)
LDW_DEFINE_ERROR(EmptyData)
LDW_DEFINE_ERROR(InsufficientData)
LDW_DEFINE_ERROR(DegenerateComponent)
LDW_DEFINE_ERROR(NumericalUnderflow)
LDW_DEFINE_ERROR(SequenceTooShort)

// prediction / warning
LDW_DEFINE_ERROR(InvalidRequest)
LDW_DEFINE_ERROR(LengthMismatch)
LDW_DEFINE_ERROR(HorizonMismatch)
LDW_DEFINE_ERROR(InvalidGeometry)
LDW_DEFINE_ERROR(DuplicateName)

// data handling
LDW_DEFINE_ERROR(NonMonotonicTime)
LDW_DEFINE_ERROR(TooFewEvents)
LDW_DEFINE_ERROR(InvalidProfile)
LDW_DEFINE_ERROR(IoFailure)
LDW_DEFINE_ERROR(InvalidConfig)

// metrics
LDW_DEFINE_ERROR(ZeroTotal)
LDW_DEFINE_ERROR(NoWarnings)

#undef LDW_DEFINE_ERROR

// Malformed trace input; line and column are 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::size_t column, const std::string& reason)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + reason),
        line_(line),
        column_(column),
        reason_(reason) {}

  const char* kind() const noexcept override { return "ParseError"; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::size_t column_;
  std::string reason_;
};

}  // namespace ldw
