#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "latte/embed.hpp"

namespace latte::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kKnowledgeSource = 2,
  kMissingArtifact = 3,
  kRuntime = 4,
};

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Cumulative LLM call counts kept in <output_dir>/llm_calls.json.
LlmCallSummary read_call_ledger(const std::filesystem::path& output_dir);
LlmCallSummary add_to_call_ledger(const std::filesystem::path& output_dir, const LlmCallSummary& delta);

}  // namespace latte::cli
