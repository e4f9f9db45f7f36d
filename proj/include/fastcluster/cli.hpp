#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fastcluster {

/// Entry point of the `fastcluster` tool. `args` excludes the program name.
/// Returns 0 on success, 2 on invalid configuration, 1 on runtime failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fastcluster
