#pragma once

#include <iosfwd>

namespace sasv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNumericError = 2;

/// Entry point of the `sasv` tool. Returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace sasv::cli
