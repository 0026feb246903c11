#pragma once

#include <iosfwd>

namespace nfw::cli {

/// Entry point of the `nfw` tool. Writes the one-line JSON summary to `out`
/// and diagnostics to `err`; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nfw::cli
