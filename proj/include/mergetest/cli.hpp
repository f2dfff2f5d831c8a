#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mergetest {

// Entry point of the `mergetest` tool. Subcommands: train, campaign, fmc,
// compare, trajectory. Failures print {"error": {"kind", "message"}} to `err`
// and return 1 (2 for usage errors).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mergetest
