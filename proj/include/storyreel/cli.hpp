#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace storyreel {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInvalid = 2;

/// Entry point behind the `storyreel` executable. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace storyreel
