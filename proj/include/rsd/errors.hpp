#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rsd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller broke a documented precondition (shapes, ranges, empty selections).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Non-finite values during encoding or optimization. `index()` is the item
// index or the optimizer step, depending on where it was raised.
class FitDivergence : public Error {
 public:
  FitDivergence(const std::string& what, long index) : Error(what), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

class DegenerateObjective : public Error {
 public:
  using Error::Error;
};

class DegenerateFixture : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public IngestionError {
 public:
  ParseError(const std::string& what, std::size_t line) : IngestionError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsd
