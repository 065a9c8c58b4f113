#pragma once

// Command dispatch for the caplim executable.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace caplim::app {

struct CommandRequest {
  /// e.g. {"verify", "axioms"}, {"experiment", "slln"}, {"bounds", "eval"}, {"choquet"}.
  std::vector<std::string> command;
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
  std::optional<std::string> out;
  /// bounds eval: calculator name.
  std::string formula = "all";
  /// bounds eval: input overrides (x, y, n, B, M_pp, M_p, K, p, delta, r).
  std::map<std::string, double> inputs;
};

enum ExitCode : int { kPass = 0, kError = 1, kFail = 2 };

/// Runs one command; writes a human-readable summary to `out` and diagnostics to `err`.
int run_command(const CommandRequest& request, std::ostream& out, std::ostream& err);

}  // namespace caplim::app
