#pragma once

#include <exception>
#include <iosfwd>

namespace lmmsel::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Maps a caught exception to the documented exit code.
int exit_code_for(const std::exception& e);

/// Entry point shared by the executable and the tests. Results go to files
/// (and summaries to `out`); failures are reported as one JSON object on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lmmsel::cli
