#pragma once

#include <string>
#include <vector>

namespace cdhmm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Runs `cdhmm <args...>` (args exclude the program name) and returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace cdhmm::cli
