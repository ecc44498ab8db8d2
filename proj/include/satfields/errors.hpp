#pragma once

#include <stdexcept>
#include <string>

namespace satfields {

// Error taxonomy shared by the library and the CLI. Each class maps to a
// distinct process exit code (see exit_code_for / cli.cpp).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violations of internal call contracts (mismatched shapes etc). These are
// bugs in the caller, not user-facing configuration problems.
struct ContractViolation : std::logic_error {
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitFormat = 4,
  kExitNumeric = 5,
};

}  // namespace satfields
