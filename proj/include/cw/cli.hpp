#pragma once

namespace cw {

// Parses the command line and executes one subcommand (run, resume, eval,
// inspect). Returns the process exit code: 0 success, 2 configuration
// problem, 3 stage failure (the stage is named on stderr), 4 corrupt
// manifest.
int run_cli(int argc, const char* const* argv);

} // namespace cw
