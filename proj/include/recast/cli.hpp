#pragma once

#include <string>
#include <vector>

namespace recast::cli {

/// Entry point behind the `recast` binary; also callable in-process from
/// tests. `args` excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace recast::cli
