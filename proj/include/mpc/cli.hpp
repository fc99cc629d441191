#pragma once

#include <iosfwd>

namespace mpc {

/// Entry point of the `mpc` tool: simulate, estimate and validate.
/// Returns 0 on success, 2 on usage or data errors, 3 on internal invariant
/// violations.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mpc
