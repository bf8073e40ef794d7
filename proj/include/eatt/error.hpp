#pragma once

#include <stdexcept>
#include <string>

namespace eatt {

// Base of every error the library throws. Subclasses name the failure
// category so callers (the CLI in particular) can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Softmax row with no finite entry, empty tensor passed to a statistic, ...
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// Input violates an operation's precondition (non-binary mask, non-finite input).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Sequence longer than a variant's max_len.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// (variant, level) pair the cost model does not define.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class ProvenanceError : public Error {
 public:
  using Error::Error;
};

class NestingError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ExhaustionError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(long step, double lr, const std::string& what)
      : Error(what), step_(step), lr_(lr) {}
  long step() const { return step_; }
  double lr() const { return lr_; }

 private:
  long step_;
  double lr_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace eatt
