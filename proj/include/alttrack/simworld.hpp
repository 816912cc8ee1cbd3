#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "alttrack/decoder.hpp"
#include "alttrack/geometry.hpp"

namespace alttrack {

struct ScenarioConfig {
  double arena = 20.0;  ///< half extent (m) of the square around the ego vehicle
  std::size_t frames = 10;
  double dt = 0.5;
  std::size_t initial_objects = 4;
  double birth_rate = 0.3;  ///< Poisson mean of new objects per frame
  double death_prob = 0.02;
  std::size_t max_objects = 8;
  double speed_min = 0.0;
  double speed_max = 3.0;
  double process_noise = 0.05;  ///< velocity random walk sigma (m/s per frame)
  double sigma_pos = 0.1;
  double sigma_size = 0.05;
  double sigma_yaw = 0.05;
  double occlusion_prob = 0.05;  ///< chance per frame that a visible object starts an occlusion spell
  double occlusion_length = 1.0; ///< mean spell length in frames (geometric)
  double clutter_rate = 0.2;     ///< Poisson mean of clutter tokens per frame
  double ego_speed = 2.0;
  double ego_yaw_rate = 0.05;
  std::size_t obs_dim = 32;
  std::uint64_t encoder_seed = 99;
  std::uint64_t seed = 1;

  /// Throws ContractError naming the first invalid field.
  void validate() const;
  /// One-line key=value rendering used in file headers.
  std::string to_string() const;
  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

struct GtObject {
  int id;
  BoxState box;  ///< world frame
  friend bool operator==(const GtObject&, const GtObject&) = default;
};

struct ObsToken {
  Vec3 position;  ///< vehicle frame
  std::vector<double> embedding;
  int source;  ///< ground-truth id, or -1 for clutter
  friend bool operator==(const ObsToken&, const ObsToken&) = default;
};

struct ScenarioFrame {
  EgoPose pose;
  std::vector<GtObject> objects;
  std::vector<ObsToken> tokens;
  friend bool operator==(const ScenarioFrame&, const ScenarioFrame&) = default;
};

struct Scenario {
  ScenarioConfig config;
  std::vector<ScenarioFrame> frames;

  ObservationSet observations(std::size_t frame) const;
  /// Ground truth of a frame re-expressed in that frame's vehicle coordinates.
  std::vector<GtObject> vehicle_frame_objects(std::size_t frame) const;
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Fixed random linear encoder from a 9-parameter box to an obs_dim embedding.
class BoxEncoder {
 public:
  BoxEncoder(std::size_t dim, std::uint64_t seed);
  std::vector<double> encode(const BoxState& box) const;

 private:
  std::size_t dim_;
  std::vector<double> weight_;  // [9, dim]
};

Scenario generate_scenario(const ScenarioConfig& cfg);
/// Same, but frame 0 starts from the given world-frame boxes instead of random objects.
Scenario generate_scenario(const ScenarioConfig& cfg, std::span<const BoxState> initial);

void write_scenario(std::ostream& os, const Scenario& s);
void save_scenario(const std::string& path, const Scenario& s);
/// Throws std::runtime_error with the offending line number on malformed input.
Scenario read_scenario(std::istream& is);
Scenario load_scenario(const std::string& path);

/// Applies key=value pairs from `text` (as produced by ScenarioConfig::to_string) onto `cfg`.
void parse_scenario_config(const std::string& text, ScenarioConfig& cfg);

}  // namespace alttrack
