#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace eigenopt {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitStage = 3,
  kExitThreshold = 4,
};

struct CommandOptions {
  std::optional<std::filesystem::path> config;  // defaults when absent
  std::optional<std::uint64_t> seed;            // overrides the config seed
  std::filesystem::path out;
};

// Each command writes its artifacts plus config.txt into options.out and
// reports progress on `log`. A failed stage leaves a FAILED marker naming it.
int cmd_theorem_check(const CommandOptions& options, std::ostream& log);
int cmd_pipeline(const CommandOptions& options, std::ostream& log);
int cmd_deep(const CommandOptions& options, std::ostream& log);

}  // namespace eigenopt
