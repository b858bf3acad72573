#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dosesens::cli {

/// Runs one command line. Reports go to --output (or `out`), diagnostics to
/// `err`. Returns 0 on success, 1 on a computation or input error and 2 on a
/// usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

}  // namespace dosesens::cli
