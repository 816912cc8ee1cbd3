#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "alttrack/geometry.hpp"

namespace alttrack {

struct EvalConfig {
  double threshold = 2.0;       ///< center distance (m) for a match
  std::size_t grid_size = 40;   ///< recall grid r_k = k / grid_size
  double min_recall = 0.1;
  void validate() const;
};

struct PredBox {
  int track_id;
  BoxState box;
  double score;
};

struct GtBox {
  int id;
  BoxState box;
};

using PredFrames = std::vector<std::vector<PredBox>>;
using GtFrames = std::vector<std::vector<GtBox>>;

struct FrameMatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< (gt index, pred index)
  std::vector<double> distances;                           ///< per pair
  std::size_t fp = 0;
  std::size_t fn = 0;
};

/// Matches one frame. Pairs from `previous` (gt id -> track id) that are still within the
/// threshold are kept first; the rest are matched greedily by ascending center distance, ties
/// broken by (gt index, pred index).
FrameMatch match_frame(const std::vector<PredBox>& preds, const std::vector<GtBox>& gts, double threshold,
                       const std::map<int, int>& previous = {});

struct ClearMot {
  std::size_t tp = 0, fp = 0, fn = 0, ids = 0, gt = 0;
  double distance_sum = 0.0;
  double mota() const;
  double recall() const;
  double motp() const;  ///< mean TP center distance (0 when there are no TPs)
};

/// CLEAR MOT over a sequence using predictions with score >= min_score. IDS counts a GT whose
/// matched track id differs from the last track id it was matched to.
ClearMot clear_mot(const PredFrames& preds, const GtFrames& gts, double threshold, double min_score = -INFINITY);

struct RecallPoint {
  double recall;     ///< target recall r
  bool reached;
  double cutoff;     ///< score cutoff used (NaN when unreached)
  double motar;
  ClearMot counts;
};

struct EvalReport {
  double amota = 0, amotp = 0;
  double best_recall = 0;  ///< grid recall where MOTA peaks
  double mota = 0, recall = 0;
  std::size_t ids = 0, fp = 0, fn = 0, tp = 0, gt = 0;
  std::vector<RecallPoint> curve;
};

/// Sweeps score cutoffs over the recall grid. For each r the highest cutoff whose recall
/// reaches r is used; MOTAR_r = max(0, 1 - (IDS + FP + FN - (1 - r) P) / (r P)). Unreached
/// MOTAR is clamped to [0, 1]. Unreached
/// grid points contribute MOTAR 0 and the match threshold to AMOTP.
EvalReport evaluate(const PredFrames& preds, const GtFrames& gts, const EvalConfig& cfg = {});

void write_report(std::ostream& os, const EvalReport& r, const std::string& header = "");
/// Parses the key: value section of a report.
std::map<std::string, double> read_report_values(std::istream& is);

}  // namespace alttrack
