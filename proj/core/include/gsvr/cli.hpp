#pragma once

#include <string>
#include <vector>

namespace gsvr {

// Command-line entry point: subcommands simulate, reconstruct, evaluate,
// export-slices. Exit codes: 0 success, 1 usage, 2 I/O, 3 validation,
// 4 numerical divergence.
int run_cli(const std::vector<std::string>& args);

}  // namespace gsvr
