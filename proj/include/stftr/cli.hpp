#pragma once

#include <string>
#include <vector>

namespace stftr {

// Exit codes of every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitWarnings = 2;

// `stftr simulate|fit|bootstrap|compare|report ...`; args excludes argv[0].
// Diagnostics go to stderr; returns the exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace stftr
