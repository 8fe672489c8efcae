#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flowstyle {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

/// Runs one `flowstyle` command. `args` excludes the program name.
/// Returns 0 on success, 1 on a usage error and 2 on a runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowstyle
