#pragma once

#include <stdexcept>
#include <string>

namespace spdc {

enum class ErrorKind {
  validation,
  parse,
  classical_regime,
  physicality,
  truncation,
  degenerate_input,
  support,
  sub_poissonian,
};

const char* to_string(ErrorKind kind) noexcept;

// Numerical errors are failures of the data or model; everything else is a
// malformed request.
bool is_numerical(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class TruncationError : public Error {
 public:
  TruncationError(double tail_mass, double bound);

  double tail_mass() const noexcept { return tail_mass_; }

 private:
  double tail_mass_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace spdc
