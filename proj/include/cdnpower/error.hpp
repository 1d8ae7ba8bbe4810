#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdnpower {

// Root of every error thrown by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument lies outside the domain of the operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Some slot carries more load than the whole cluster may serve at its target
// threshold (lambda_t > Lambda * M).
class InfeasibleTrace : public DomainError {
 public:
  InfeasibleTrace(std::size_t slot, const std::string& what)
      : DomainError(what), slot_(slot) {}

  // One-based slot index.
  std::size_t slot() const noexcept { return slot_; }

 private:
  std::size_t slot_;
};

// Mismatched shapes between cooperating values (trace vs schedule etc).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Invalid parameters or configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed trace input. Row numbers are one-based and count the header.
class IngestionError : public Error {
 public:
  IngestionError(std::size_t row, const std::string& what)
      : Error(what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

// Brute-force search refused because the instance is too large.
class RefusalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdnpower
