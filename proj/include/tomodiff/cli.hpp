#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tomodiff {

/// Exit codes: 0 success, 1 usage error, 2 runtime or numerical error.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

} // namespace tomodiff
