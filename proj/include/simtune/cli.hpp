#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "simtune/error.hpp"

namespace simtune {

inline constexpr const char* kVersion = "0.1.0";

/// Process exit codes of the command-line tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,      // unexpected internal error
    kExitConfig = 2,       // bad flags, unparsable or invalid config
    kExitInput = 3,        // missing or unreadable input files
    kExitDivergence = 4,   // non-finite loss or gradient during a run
    kExitCheckFailed = 5,  // gradcheck found a mismatching gradient
};

int exit_code_for(ErrorKind kind);

/// Runs one command. `args` excludes the program name, e.g.
/// {"train", "--config", "train.json", "--out", "runs/a"}.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace simtune
