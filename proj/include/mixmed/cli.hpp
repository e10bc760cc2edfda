#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mixmed {

/// Entry point of the command-line tool. Returns the process exit status:
/// 0 success, 2 configuration errors, 3 data errors, 4 numerical failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace mixmed
