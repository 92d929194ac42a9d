#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace saev::cli {

// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or usage.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace saev::cli
