#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pmatch::cli {

/// Runs the command line (args[0] is the program name). Returns the exit
/// code: 0 success, 2 configuration, 3 engine cap, 4 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args);

}  // namespace pmatch::cli
