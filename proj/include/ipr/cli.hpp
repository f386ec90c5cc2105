#pragma once

namespace ipr {

// Full command-line surface; returns the process exit code. Lives in the
// library so tests can drive subcommands in-process.
int ipr_main(int argc, char** argv);

}  // namespace ipr
