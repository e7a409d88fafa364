#pragma once

#include <iosfwd>

namespace hcil {

// Entry point of the `hcil` command-line tool. Returns the process exit code:
// 0 on success, 1 on a runtime error, 2 on a usage error. Errors are written
// to `err` as one line: "error: <CODE>: <message>".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hcil
