#pragma once

// `aide` operator client. Thin wrapper over the HTTP API, except `replay`,
// which reads a data directory directly.
//
// Exit status: 0 ok; 1 / 2 gate fail / insufficient data (gate evaluate);
// 64 usage error; 69 server unreachable; 70 server-side error.

#include <iosfwd>
#include <string>
#include <vector>

namespace aide {

inline constexpr int kExitUsage = 64;
inline constexpr int kExitUnavailable = 69;
inline constexpr int kExitServerError = 70;

// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aide
