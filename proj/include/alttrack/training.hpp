#pragma once

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "alttrack/decoder.hpp"
#include "alttrack/simworld.hpp"

namespace alttrack {

struct LossConfig {
  double lambda_cls = 2.0;
  double lambda_reg = 0.25;
  double lambda_asso = 10.0;
  double lambda_ce = 0.1;
  double cls_alpha = 0.25;
  double cls_gamma = 2.0;
  double asso_alpha = 0.5;
  double asso_gamma = 1.0;
};

struct TrainConfig {
  LossConfig loss;
  AdamWConfig optimizer{.lr = 2e-3};
  std::size_t steps = 2000;
  /// Anneal the learning rate from optimizer.lr to zero along a half cosine over `steps`.
  bool cosine_decay = true;
  std::size_t seq_len = 3;
  /// Mini-sequences whose gradients are summed per optimizer step.
  std::size_t batch = 1;
  /// Global gradient norm limit; 0 disables clipping.
  double grad_clip = 1.0;
  double w_t = 0.0;
  std::uint64_t seed = 1;
};

/// Ground truth of one frame as seen by the model: vehicle-frame boxes of objects that produced
/// at least one observation token.
struct FrameTargets {
  std::vector<int> ids;
  std::vector<BoxState> boxes;
};
FrameTargets visible_targets(const Scenario& s, std::size_t frame);

struct AssignmentTargets {
  std::vector<int> track_ids;  ///< GT id per track query, -1 = none
  std::vector<int> det_ids;    ///< GT id per detection query, -1 = none
  Tensor y;                    ///< [N_D, N_K]; empty when there are no keys
};

/// Hungarian cost for matching detection query j to ground truth g:
/// lambda_cls * (focal cost as positive - focal cost as negative) + lambda_reg * L1(box_j, gt_g).
std::vector<std::vector<double>> detection_match_cost(const Tensor& det_logits, const Tensor& det_boxes,
                                                      const FrameTargets& gt, const LossConfig& cfg);

/// Identity-guided track targets, Hungarian detection targets over all ground truths, and the
/// association matrix (aux column absorbing rows without a track match when `with_aux`).
AssignmentTargets assign_targets(std::span<const int> prev_track_ids, const Tensor& det_logits, const Tensor& det_boxes,
                                 const FrameTargets& gt, const LossConfig& cfg, bool with_aux);

/// Per-layer loss terms of one frame; track and association vars are invalid when absent.
struct LossVars {
  Var cls_d, reg_d, cls_t, reg_t, asso_fl, asso_ce;
};
struct LossTerms {
  double cls_d = 0, reg_d = 0, cls_t = 0, reg_t = 0, asso_fl = 0, asso_ce = 0;
};

/// Sums detection terms over all frames and track/association terms from the second frame on,
/// for every layer: lambda_cls*cls + lambda_reg*reg + lambda_asso*(FL + lambda_ce*CE).
Var total_loss(Tape& tape, const std::vector<std::vector<LossVars>>& frames, const LossConfig& cfg);
double total_loss(const std::vector<std::vector<LossTerms>>& frames, const LossConfig& cfg);

struct SequenceLoss {
  Var total;
  std::vector<std::vector<LossVars>> terms;  ///< [frame][layer]
};

/// Unrolls the model over frames [start, start + len) of a scenario with train-time association
/// and returns the differentiable loss.
SequenceLoss sequence_loss(Tape& tape, const Model& model, const Scenario& scenario, std::size_t start,
                           std::size_t len, const TrainConfig& cfg);

struct StepReport {
  double total = 0;
  LossTerms terms;  ///< summed over frames and layers, unweighted
};

/// Zeroes gradients, accumulates them over the mini-sequences, clips and applies one update.
/// Throws DivergenceError on a non-finite loss or gradient; the model is left untouched then.
StepReport train_step(Model& model, AdamW& opt, const Scenario& scenario, std::size_t start, const TrainConfig& cfg);
StepReport train_step(Model& model, AdamW& opt, const std::vector<std::pair<const Scenario*, std::size_t>>& batch,
                      const TrainConfig& cfg);

using StepCallback = std::function<void(std::size_t step, const StepReport&)>;

/// Runs cfg.steps optimizer steps on mini-sequences sampled from `data` with cfg.seed.
std::vector<StepReport> train(Model& model, const std::vector<Scenario>& data, const TrainConfig& cfg,
                              const StepCallback& on_step = {});

}  // namespace alttrack
