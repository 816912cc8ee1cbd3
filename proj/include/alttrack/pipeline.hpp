#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "alttrack/config.hpp"
#include "alttrack/metrics.hpp"

namespace alttrack {

/// Training scenarios: cfg.scenario with seeds scenario.seed + i, i < train_scenarios.
std::vector<Scenario> training_set(const RunConfig& cfg);
/// Held-out scenario: cfg.scenario with heldout_seed and heldout_frames.
Scenario heldout_scenario(const RunConfig& cfg);

Model train_model(const RunConfig& cfg, const std::vector<Scenario>& data, std::vector<StepReport>* log = nullptr,
                  const StepCallback& on_step = {});

/// Runs the tracker over every frame; boxes are in world coordinates. The scenario's dt is used
/// for reference-point propagation.
PredFrames track_scenario(const Model& model, const TrackerConfig& cfg, const Scenario& scenario);
/// World-frame boxes of objects that produced at least one observation token.
GtFrames scenario_ground_truth(const Scenario& scenario);

// Results file:
//   # alttrack results v1
//   # config <line>            (repeated, one per config text line)
//   frames=N
//   <frame> <track_id> <9 box params> <score>   (one line per emitted track, %.17g)
struct Results {
  std::string config_text;
  PredFrames frames;
};
void write_results(std::ostream& os, const Results& r);
Results read_results(std::istream& is);
void save_results(const std::filesystem::path& path, const Results& r);
Results load_results(const std::filesystem::path& path);

/// Evaluates results against a scenario; throws std::runtime_error when frame counts differ.
EvalReport evaluate_results(const Results& results, const Scenario& scenario, const EvalConfig& cfg = {});

/// Saves a checkpoint whose embedded config is to_text(cfg); load_model restores both.
void save_model(const std::filesystem::path& path, const Model& model, const RunConfig& cfg);
Model load_model(const std::filesystem::path& path, RunConfig* cfg = nullptr);

/// Writes <dir>/<name>.manifest: command, config hash, seed, produced files and the config itself.
void write_manifest(const std::filesystem::path& dir, const std::string& name, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::string>& files);

struct AbReplica {
  std::uint64_t seed = 0;
  EvalReport base, aux;
};
struct AbReport {
  std::vector<AbReplica> replicas;
  double mean_amota_base = 0, mean_amota_aux = 0;
  double median_ids_base = 0, median_ids_aux = 0;
};
/// Trains the base model and the auxiliary-token variant on the same data for each of
/// cfg.ab_seeds replicas (replica k shifts model, training and scenario seeds by k) and evaluates
/// both on the replica's held-out scenario.
AbReport run_ab(const RunConfig& cfg, const std::function<void(const std::string&)>& progress = {});
void write_ab_report(std::ostream& os, const AbReport& r);

struct AuditRow {
  std::string block;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed() const { return max_rel_error < tolerance; }
};
/// Central-difference gradient audit of every differentiable block and a two-frame unroll.
std::vector<AuditRow> gradient_audit();

}  // namespace alttrack
