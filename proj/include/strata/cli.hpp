#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace strata {

/// Runs one `strata` subcommand. Returns 0 on success, 1 on runtime
/// failure and 2 on configuration errors; diagnostics go to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace strata
