#pragma once

#include <ostream>

namespace brainage::cli {

/// Exit codes: 0 success, 2 invalid input, 3 numeric failure, 4 I/O.
/// Failures print one line to err: error kind=<kind> code=<n> message="<text>".
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace brainage::cli
