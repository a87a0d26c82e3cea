#pragma once

#include <stdexcept>
#include <string>

namespace vaquita {

// Error taxonomy shared by the library and the CLI. The CLI maps these to
// process exit codes: 2 format, 3 degenerate-input, 4 shape, 5 numeric.
// Contract violations (API misuse, bad argument values) also map to 2.

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exit code for an escaped exception; unknown exceptions map to 1.
int cli_exit_code(const std::exception& e) noexcept;

}  // namespace vaquita
