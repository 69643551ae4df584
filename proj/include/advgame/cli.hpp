#pragma once

#include <cstdint>
#include <string>

namespace advgame {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitNumeric = 3,
  kExitIo = 4,
};

/// Entry point of the `advgame` tool; returns the process exit status.
int cli_main(int argc, char** argv);

/// Run directory name: YYYYmmdd-HHMMSS-seed<k> in local time.
std::string run_dir_name(std::uint64_t seed);

}  // namespace advgame
