#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ordfa {

/// Runs the command line tool; args excludes the program name. Returns the
/// process exit code.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace ordfa
