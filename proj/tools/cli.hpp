#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace recur::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kInvalidInput = 2,  // usage, unreadable or invalid data, invalid scenario
  kPositivity = 3,
};

/// Runs `recur <subcommand> ...`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace recur::cli
