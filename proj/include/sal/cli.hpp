#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace sal {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2 };

/// Sectioned key/value configuration, `[section]` headers and `key = value`
/// lines, `#` or `;` comments.
using ConfigFile = std::map<std::string, std::map<std::string, std::string>>;

ConfigFile parse_config(std::istream& in, const std::string& origin = "config");

/// Runs `sal <command> [flags]`. Diagnostics go to `err`, everything else to
/// `out`. Returns one of the ExitCode values.
int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out,
                       std::ostream& err);
int parse_and_dispatch(int argc, const char* const* argv);

}  // namespace sal
