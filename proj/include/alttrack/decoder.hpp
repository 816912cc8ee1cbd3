#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "alttrack/association.hpp"
#include "alttrack/autodiff.hpp"
#include "alttrack/geometry.hpp"

namespace alttrack {

struct ModelConfig {
  std::size_t d_k = 32;
  std::size_t num_layers = 4;
  std::size_t num_det_queries = 32;
  bool aux_token = false;
  /// Carry the evolved auxiliary token to the next frame instead of resetting it each frame.
  bool aux_propagate = true;
  /// Keep edge features across layers; when false they restart from zero in every layer.
  bool edge_iteration = true;
  /// Block detection rows from attending track keys in self-attention.
  bool mask_det_to_track = false;
  /// Block track rows from attending detection keys in self-attention.
  bool mask_track_to_det = false;
  /// Use each layer's predicted centers as the reference points of the next layer.
  bool refine_refpoints = true;
  PosEncoding pos_encoding = PosEncoding::box;
  /// Distance scale (m) of the observation attention bias.
  double tau_pos = 2.0;
  /// Half extent (m) of the area covered by the initial detection reference points.
  double ref_extent = 20.0;
  std::uint64_t init_seed = 1;
};

/// Parameters plus the hyperparameters that shaped them.
struct Model {
  ModelConfig config;
  ParamStore params;

  static Model create(const ModelConfig& cfg);
  std::string layer_prefix(std::size_t layer) const { return "layer" + std::to_string(layer); }
};

/// Observation tokens fed to the detector stand-in: embeddings [N_O, d] and positions [N_O, 3].
struct ObservationSet {
  Tensor embeddings;
  Tensor positions;

  std::size_t size() const { return positions.size() / 3; }
  static ObservationSet empty(std::size_t d);
};

/// Query-level inputs for one frame. Track vars may be invalid when there are no tracks; the
/// aux var is valid iff the model uses the auxiliary token.
struct QuerySet {
  Var track_embeddings;  ///< [N_T, d]
  Var track_refpoints;   ///< [N_T, 3]
  Var aux_token;         ///< [1, d]
  std::size_t num_tracks = 0;
};

/// Heads output for one layer. Track fields are invalid when N_T == 0; affinity is invalid when
/// the association stage was skipped.
struct LayerOutput {
  Var det_boxes;     ///< [N_D, 9]
  Var det_logits;    ///< [N_D, 1]
  Var track_boxes;   ///< [N_T, 9]
  Var track_logits;  ///< [N_T, 1]
  Var affinity;      ///< [N_D, N_K]
};

struct FrameOutput {
  std::vector<LayerOutput> layers;
  Var det_embeddings;    ///< final [N_D, d]
  Var det_refpoints;     ///< [N_D, 3]
  Var track_embeddings;  ///< final [N_T, d] (invalid when N_T == 0)
  Var aux_token;         ///< final [1, d] (invalid without aux token)
  Var edges;             ///< final [N_D * N_K, d] (invalid when association skipped)
  std::size_t num_tracks = 0;
  std::size_t num_keys = 0;
  /// Stage sequence, e.g. "0:self_attention".
  std::vector<std::string> trace;
};

/// Self-attention over all queries with residual. `positional` is added to queries/keys only.
/// `num_tracks`/`num_dets` locate the two blocks (tracks first) for the masks; rows beyond them
/// (the auxiliary token) are never masked.
Var self_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var queries, Var positional,
                   std::size_t num_tracks, std::size_t num_dets, bool mask_det_to_track, bool mask_track_to_det);

/// Cross-attention from queries to observation tokens with distance bias -|ref - pos|/tau on the
/// logits. Values carry the token embedding and the attended relative position. Identity when
/// there are no observations.
Var observation_cross_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var queries,
                                Var positional, Var refpoints, const ObservationSet& obs, double tau);

struct HeadOutput {
  Var boxes;   ///< [n, 9]: center = refpoint + offset, size = exp(raw)
  Var logits;  ///< [n, 1]; score = sigmoid(logit)
};
HeadOutput predict_heads(Tape& tape, const ParamStore& store, const std::string& prefix, Var embeddings, Var refpoints);

/// Initial detection queries and their reference points.
std::pair<Var, Var> detection_queries(Tape& tape, const Model& model);

/// Runs all decoder layers for one frame.
FrameOutput decode_frame(Tape& tape, const Model& model, const QuerySet& queries, const ObservationSet& obs);

/// Converts an [n,9] tensor into boxes, clamping sizes to a tiny positive floor.
std::vector<BoxState> tensor_to_boxes(const Tensor& t);

}  // namespace alttrack
