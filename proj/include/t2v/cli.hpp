#pragma once

#include <string>
#include <vector>

namespace t2v {

// Runs the command-line surface (gen-data / train / eval / ablate) on the
// given arguments (program name excluded). Returns the process exit status:
// 0 on success, nonzero after printing a one-line error to stderr.
int cli_run(const std::vector<std::string>& args);

}  // namespace t2v
