#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace paramshift {

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 2 on usage errors and 1 on any other failure, which is reported
/// as a single JSON line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Parses key=value lines; blank lines and '#' comments are skipped.
std::vector<std::pair<std::string, std::string>> parse_config_file(const std::string& text);

}  // namespace paramshift
