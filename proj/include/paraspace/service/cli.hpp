#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace paraspace::service {

/// Headless pipeline: init, sample, run, feature, embed, label, summarize,
/// export and serve. `args` excludes the program name. Returns the process
/// exit status; errors print one line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace paraspace::service
