// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace mgt {

/// Runs the `mgt` command line. Returns 0 on success, 1 on validation or
/// usage errors and 2 on runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mgt
