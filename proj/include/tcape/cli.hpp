#pragma once

#include <iosfwd>

namespace tcape {

/// Entry point of the `tcape` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tcape
