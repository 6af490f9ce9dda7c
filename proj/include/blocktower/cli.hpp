#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace blocktower::cli {

// Exit codes: 0 success, 1 validation or usage error, 2 runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace blocktower::cli
