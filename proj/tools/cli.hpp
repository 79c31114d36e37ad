#pragma once

#include <string>
#include <vector>

namespace xssm::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNumericError = 3;

// Entry point of the `xssm` tool; returns the process exit code.
int run(int argc, char** argv);
// Same, with argv[0] omitted.
int run(const std::vector<std::string>& args);

}  // namespace xssm::cli
