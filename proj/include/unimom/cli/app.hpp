#pragma once

#include <iosfwd>

namespace unimom::cli {

/// Entry point of the `unimom` tool. Returns the process exit code: 0 on
/// success, 1 on a runtime failure (one-line diagnostic on `err`), 2 on a
/// command-line error (message plus usage on `err`).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace unimom::cli
