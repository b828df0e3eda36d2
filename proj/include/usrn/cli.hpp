// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace usrn {

/// Process exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,        // unknown subcommand or bad flags
  kExitConfig = 3,       // unknown config key or invalid value
  kExitMissingFile = 4,  // input file does not exist
  kExitFormat = 5,       // corrupt file or version mismatch
  kExitRuntime = 6,      // any other failure
};

/// Runs one subcommand: synth, train, evaluate, render, sweep or info.
/// `args` excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace usrn
