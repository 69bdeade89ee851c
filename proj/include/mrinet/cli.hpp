#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mrinet {

// Exit codes of the command-line tool.
inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 1; // bad flags, config or arguments
inline constexpr int exit_runtime = 2;    // data, IO, checkpoint or numeric failures

// Runs the tool with args[0] as the program name. Subcommands: split, train,
// eval, inspect, predict, augment-preview.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace mrinet
