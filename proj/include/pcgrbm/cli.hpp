#pragma once

#include <ostream>

namespace pcgrbm {

/// Runs the command-line tool. Returns 0 on success, 1 on runtime failure, 2 on usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pcgrbm
