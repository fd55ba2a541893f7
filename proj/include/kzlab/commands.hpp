#pragma once

// Experiment commands behind the kzlab executable. Each writes its data files
// plus a manifest_<command>.json into the output directory and returns an
// exit code.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include "kzlab/io.hpp"

namespace kzlab {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitNumerical = 2,
  kExitStatistical = 3,
};

struct CommandContext {
  Params params;
  std::optional<std::uint64_t> seed;  // overrides params["seed"]
  unsigned threads = 0;
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;  // human-readable summary; may be null
};

// Keys: d, L (list or a..b), K, k (mode "1;0"), oracle, scaling, probe.
int cmd_quadruplets(const CommandContext& ctx);
// Sections [lattice] [damping] [forcing] [sim] [initial]; sim.mode is
// effective or full.
int cmd_simulate(const CommandContext& ctx);
// Keys: dir (a simulate output directory), test = chain2|chain4|closure|ou,
// snapshot, stride, sigmas.
int cmd_moments(const CommandContext& ctx);
// action = scan|evolve|rj-check|kz-exponents; section [kinetic] plus
// [scan] or [evolve].
int cmd_kinetic(const CommandContext& ctx, const std::string& action);

// Runs fn and maps exceptions to exit codes, printing the message to err.
int run_guarded(std::ostream& err, const std::function<int()>& fn);

}  // namespace kzlab
