#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace recat::cli {

/// Exit codes: 0 success, 1 unexpected failure, 2 usage, 3 config,
/// 4 io, 5 shape, 6 format.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace recat::cli
