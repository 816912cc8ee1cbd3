#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "alttrack/simworld.hpp"

namespace alttrack {

enum ExitCode { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2, kExitDivergence = 3 };

struct ScenarioStats {
  std::size_t frames = 0, object_frames = 0, identities = 0, tokens = 0, clutter = 0;
};
ScenarioStats scenario_stats(const Scenario& s);
/// "frames=.. object_frames=.. identities=.. tokens=.. clutter=.."
std::string to_string(const ScenarioStats& s);

/// Runs one `alttrack <command> ...` invocation; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace alttrack
