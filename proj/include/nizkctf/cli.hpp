#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace nizkctf {

/// Exit codes of the command-line tool.
enum ExitCode : int {
    exit_ok = 0,
    exit_rejected = 1, ///< domain rejection or runtime failure
    exit_usage = 2,
};

/// Runs one command-line invocation. `args` excludes the program name.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err,
            std::istream& in);

} // namespace nizkctf
