#pragma once

#include <ostream>

namespace headsynth::cli {

// Exit codes of the `headsynth` tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace headsynth::cli
