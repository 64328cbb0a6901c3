#pragma once

#include <iosfwd>

namespace actvocab::cli {

// Subcommands: gen-data, train, adapt, eval, analyze, probe, serve.
// Returns 0 on success, 1 on a runtime failure and 2 on a usage error.
// Failures print one JSON line {"error": ..., "command": ...} to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace actvocab::cli
