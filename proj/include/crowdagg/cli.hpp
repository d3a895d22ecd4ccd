#pragma once

namespace crowdagg {

// Full command-line entry point; returns the process exit code
// (0 success, 2 input error, 3 numerical failure).
int run_cli(int argc, const char* const* argv);

}  // namespace crowdagg
