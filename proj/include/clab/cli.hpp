#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace clab::cli {

inline constexpr std::string_view kVersion = "0.1.0";

// Runs one subcommand. `args` excludes the program name. Returns 0 on
// success, 1 on usage errors, 2 on data errors and 3 when a numerical
// routine fails to converge.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace clab::cli
