#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "alttrack/decoder.hpp"
#include "alttrack/geometry.hpp"

namespace alttrack {

/// Minimum-cost one-to-one assignment of min(n, m) rows and columns. Returns (row, col) pairs
/// sorted by row. Costs must be finite.
std::vector<std::pair<std::size_t, std::size_t>> hungarian(const std::vector<std::vector<double>>& cost);

/// Matches are (track index, detection index) into the lists passed in; the three sets
/// partition the tracks and detections.
struct AssociationResult {
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_dets;
  /// Unmatched detections that start new tracks.
  std::vector<std::size_t> spawn;
};

/// Inference association: Hungarian on 1 - sigmoid(S) over the first `num_tracks` columns of
/// `affinity` (the auxiliary column is ignored), rejecting pairs below tau_s. Unmatched
/// detections with score > tau_new spawn.
AssociationResult associate_infer(const Tensor& affinity, std::span<const double> det_scores, std::size_t num_tracks,
                                  double tau_s, double tau_new);

/// Training association from ground-truth identities (-1 = none). Tracks without a matching
/// detection identity are dropped; detections with an identity no track holds spawn.
AssociationResult associate_train(std::span<const int> track_gt_ids, std::span<const int> det_gt_ids);

enum class TrackState { active, inactive };

struct Track {
  int id = 0;
  Tensor embedding;  ///< [1, d]
  BoxState box;      ///< vehicle frame of the frame it was last updated in
  Vec3 refpoint{0, 0, 0};
  double score = 0.0;
  int misses = 0;
  TrackState state = TrackState::active;
};

struct TrackerConfig {
  double tau_s = 0.3;
  double tau_new = 0.4;
  int max_misses = 5;
  double w_t = 0.0;
  double dt = 0.5;
};

/// Decoder outputs of one frame needed to update tracks.
struct FrameEstimates {
  Tensor det_embeddings;  ///< [N_D, d]
  std::vector<BoxState> det_boxes;
  std::vector<double> det_scores;
  Tensor track_embeddings;  ///< [N_T, d]; may be empty when there are no tracks
  std::vector<BoxState> track_boxes;
  std::vector<double> track_scores;
};

/// Applies an association result: matched tracks take the mixed embedding and the detection box,
/// unmatched tracks age and are dropped after max_misses, spawns receive ids from `next_id`.
/// Every survivor's refpoint is propagated by its velocity and re-expressed in the next frame.
std::vector<Track> update_tracks(const std::vector<Track>& tracks, const AssociationResult& result,
                                 const FrameEstimates& est, const TrackerConfig& cfg, const EgoPose& pose_t,
                                 const EgoPose& pose_next, int& next_id);

struct TrackOutput {
  int id;
  BoxState box;  ///< world frame
  double score;
};

/// Runs the model frame by frame over one sequence.
class Tracker {
 public:
  Tracker(const Model& model, TrackerConfig cfg);

  /// Processes one frame observed at `pose`; `next_pose` is the vehicle pose of the following
  /// frame (pass `pose` for the last frame). Returns the active tracks in world coordinates.
  std::vector<TrackOutput> step(const ObservationSet& obs, const EgoPose& pose, const EgoPose& next_pose);

  const std::vector<Track>& tracks() const noexcept { return tracks_; }
  /// Inputs and outcome of the most recent association step.
  struct FrameAssociation {
    Tensor affinity;  ///< [N_D, N_K]; empty when there were no tracks
    std::vector<double> det_scores;
    std::size_t num_tracks = 0;
    AssociationResult result;
  };
  const FrameAssociation& last_association() const noexcept { return last_; }
  void reset();

 private:
  const Model& model_;
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  std::optional<Tensor> aux_;
  FrameAssociation last_;
  int next_id_ = 0;
};

}  // namespace alttrack
