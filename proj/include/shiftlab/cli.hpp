#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace shiftlab::cli {

enum ExitCode : int { kOk = 0, kValidationError = 1, kComputationError = 2 };

/// Entry point shared by the shiftlab binary and the tests. `args` excludes
/// the program name. Reports go to --out when given, else to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace shiftlab::cli
