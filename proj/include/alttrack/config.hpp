#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "alttrack/decoder.hpp"
#include "alttrack/simworld.hpp"
#include "alttrack/tracker.hpp"
#include "alttrack/training.hpp"

namespace alttrack {

/// Invalid configuration text or value; the message names the offending field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command needs to reproduce a run.
struct RunConfig {
  ModelConfig model;
  TrackerConfig tracker;
  TrainConfig train;
  ScenarioConfig scenario;
  /// Training scenarios use seeds scenario.seed, scenario.seed + 1, ...
  std::size_t train_scenarios = 20;
  std::uint64_t heldout_seed = 900;
  std::size_t heldout_frames = 40;
  /// Replicas of the auxiliary-token comparison.
  std::size_t ab_seeds = 5;
  std::string output_dir = "out";

  /// Throws ConfigError naming the first invalid field.
  void validate() const;
};

// Grammar:
//   file    := line*
//   line    := blank | comment | section | entry
//   comment := '#' any*
//   section := '[' name ']'
//   entry   := key '=' value            (key is relative to the current section)
// Sections: run, model, tracker, loss, optimizer, train, scenario. Unknown keys are errors.

/// Parses config text on top of `base`.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});
/// Applies one "section.key=value" override.
void apply_override(RunConfig& cfg, std::string_view assignment);
/// Canonical text form; parse_run_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);
/// 64-bit FNV-1a over `text`.
std::uint64_t fnv1a(std::string_view text);
std::uint64_t config_hash(const RunConfig& cfg);
std::string hex64(std::uint64_t v);

}  // namespace alttrack
