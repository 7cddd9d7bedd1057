#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ucolor::app {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

// The command-line tool, callable in-process. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ucolor::app
