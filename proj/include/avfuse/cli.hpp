#pragma once

#include <span>
#include <string>
#include <vector>

namespace avfuse {

// Dispatches one subcommand. Machine-readable output (line-delimited JSON)
// goes to stdout, human-oriented messages to stderr.
// Exit status: 0 success, 1 user error, 2 internal error.
int run_command(const std::vector<std::string>& args);
int run_command(int argc, const char* const* argv);

}  // namespace avfuse
