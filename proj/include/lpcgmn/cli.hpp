#pragma once

#include <iosfwd>

namespace lpcgmn::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

/// Entry point of the `lpcgmn` tool: datagen, analyze, train, eval, bench.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lpcgmn::cli
