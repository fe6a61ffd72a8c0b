#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace title_forge {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Dispatches one of corpus, tokenizer, train, evaluate, generate, serve.
/// `args` excludes the program name. Results go to `out`, diagnostics and
/// usage text to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Routes library logging to stderr at the level named by TITLE_FORGE_LOG
/// (trace, debug, info, warn, error, critical, off; default info).
void configure_logging();

}  // namespace title_forge
