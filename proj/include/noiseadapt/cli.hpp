#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace noiseadapt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitDiverged = 2;

// Subcommands: generate, train, sweep, eval, inspect-q. Common flags:
// --config <path>, --seed <u64>, --out <dir>.
// Returns 0 on success, 1 on usage or configuration errors, 2 when training diverged.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace noiseadapt
