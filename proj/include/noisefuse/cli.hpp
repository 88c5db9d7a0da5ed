#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace noisefuse {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `noisefuse` tool. `args` excludes the program name.
///
/// Subcommands: invert, edit, bridge, demo. Usage errors print the schema and
/// return 2; runtime failures (bad files, numerical errors, failed demo
/// checks) return 1.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace noisefuse
