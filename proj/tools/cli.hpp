#ifndef PCFLOW_TOOLS_CLI_HPP
#define PCFLOW_TOOLS_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace pcflow::cli {

enum ExitCode : int { ok = 0, usage = 2, data = 3, numeric = 4 };

/// `args` excludes the program name. Progress goes to `out`, errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// key=value lines ('#' comments, blank lines ignored) as `--key=value`
/// arguments.
std::vector<std::string> read_config(const std::string& path);

}  // namespace pcflow::cli

#endif  // PCFLOW_TOOLS_CLI_HPP
