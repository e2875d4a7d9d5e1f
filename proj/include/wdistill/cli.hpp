#pragma once

#include <string>
#include <vector>

namespace wdistill {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Entry point of the command-line tool; argv[0] is the program name.
int cli_run(const std::vector<std::string>& argv);
int cli_run(int argc, const char* const* argv);

}  // namespace wdistill
