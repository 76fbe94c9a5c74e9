#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace handa::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNumericError = 3;

// Entry point for the `handa` binary. Output goes to `out`; diagnostics and
// usage text to `err`. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace handa::cli
