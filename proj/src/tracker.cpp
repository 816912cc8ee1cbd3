#include "alttrack/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include "alttrack/ops.hpp"

namespace alttrack {
namespace {

constexpr double kInfeasible = 1e6;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor stack_rows(const std::vector<Tensor>& rows, std::size_t d) {
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (const auto& r : rows) data.insert(data.end(), r.data().begin(), r.data().end());
  return Tensor({rows.size(), d}, std::move(data));
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n_rows = cost.size();
  if (n_rows == 0) return {};
  const std::size_t n_cols = cost[0].size();
  for (const auto& r : cost) {
    if (r.size() != n_cols) throw ContractError("hungarian: ragged cost matrix");
    for (double v : r)
      if (!std::isfinite(v)) throw ContractError("hungarian: non-finite cost");
  }
  if (n_cols == 0) return {};
  const bool transposed = n_rows > n_cols;
  const std::size_t n = transposed ? n_cols : n_rows;
  const std::size_t m = transposed ? n_rows : n_cols;
  auto a = [&](std::size_t i, std::size_t j) { return transposed ? cost[j - 1][i - 1] : cost[i - 1][j - 1]; };

  // Shortest augmenting path with potentials, 1-based with a virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transposed) out.emplace_back(j - 1, p[j] - 1);
    else out.emplace_back(p[j] - 1, j - 1);
  }
  std::sort(out.begin(), out.end());
  return out;
}

AssociationResult associate_infer(const Tensor& affinity, std::span<const double> det_scores, std::size_t num_tracks,
                                  double tau_s, double tau_new) {
  const std::size_t n_det = det_scores.size();
  AssociationResult r;
  std::vector<char> det_used(n_det, 0), track_used(num_tracks, 0);
  if (num_tracks > 0 && n_det > 0) {
    if (affinity.rows() != n_det || affinity.cols() < num_tracks) {
      throw ContractError("associate_infer: affinity shape " + shape_string(affinity.shape()) + " does not cover " +
                          std::to_string(n_det) + " detections x " + std::to_string(num_tracks) + " tracks");
    }
    std::vector<std::vector<double>> cost(num_tracks, std::vector<double>(n_det));
    for (std::size_t i = 0; i < num_tracks; ++i)
      for (std::size_t j = 0; j < n_det; ++j) {
        const double s = sigmoid(affinity.at(j, i));
        cost[i][j] = s >= tau_s ? 1.0 - s : kInfeasible;
      }
    for (const auto& [i, j] : hungarian(cost)) {
      if (sigmoid(affinity.at(j, i)) < tau_s) continue;
      r.matches.emplace_back(i, j);
      track_used[i] = det_used[j] = 1;
    }
  }
  for (std::size_t i = 0; i < num_tracks; ++i)
    if (!track_used[i]) r.unmatched_tracks.push_back(i);
  for (std::size_t j = 0; j < n_det; ++j) {
    if (det_used[j]) continue;
    r.unmatched_dets.push_back(j);
    if (det_scores[j] > tau_new) r.spawn.push_back(j);
  }
  return r;
}

AssociationResult associate_train(std::span<const int> track_gt_ids, std::span<const int> det_gt_ids) {
  auto index_of = [](std::span<const int> ids, const char* what) {
    std::unordered_map<int, std::size_t> idx;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0) continue;
      if (!idx.emplace(ids[i], i).second) {
        throw ContractError(std::string("associate_train: identity ") + std::to_string(ids[i]) + " appears twice among " + what);
      }
    }
    return idx;
  };
  const auto tracks = index_of(track_gt_ids, "tracks");
  const auto dets = index_of(det_gt_ids, "detections");
  AssociationResult r;
  std::vector<char> det_used(det_gt_ids.size(), 0);
  for (std::size_t i = 0; i < track_gt_ids.size(); ++i) {
    const auto it = track_gt_ids[i] >= 0 ? dets.find(track_gt_ids[i]) : dets.end();
    if (it == dets.end()) {
      r.unmatched_tracks.push_back(i);
    } else {
      r.matches.emplace_back(i, it->second);
      det_used[it->second] = 1;
    }
  }
  for (std::size_t j = 0; j < det_gt_ids.size(); ++j) {
    if (det_used[j]) continue;
    r.unmatched_dets.push_back(j);
    if (det_gt_ids[j] >= 0 && !tracks.contains(det_gt_ids[j])) r.spawn.push_back(j);
  }
  return r;
}

std::vector<Track> update_tracks(const std::vector<Track>& tracks, const AssociationResult& result,
                                 const FrameEstimates& est, const TrackerConfig& cfg, const EgoPose& pose_t,
                                 const EgoPose& pose_next, int& next_id) {
  const auto d = est.det_embeddings.cols();
  std::vector<Track> next;
  auto finish = [&](Track t) {
    const auto c = propagate_reference(t.box.center(), t.box.velocity(), cfg.dt);
    t.refpoint = ego_compensate(std::span<const Vec3>(&c, 1), pose_t, pose_next)[0];
    next.push_back(std::move(t));
  };
  for (const auto& [i, j] : result.matches) {
    Track t = tracks.at(i);
    const auto det = est.det_embeddings.row(j);
    if (cfg.w_t == 0.0) {
      t.embedding = det.reshaped({1, d});
    } else {
      t.embedding = ops::add(ops::scale(est.track_embeddings.row(i).reshaped({1, d}), cfg.w_t),
                             ops::scale(det.reshaped({1, d}), 1.0 - cfg.w_t));
    }
    t.box = est.det_boxes.at(j);
    t.score = est.det_scores.at(j);
    t.misses = 0;
    t.state = TrackState::active;
    finish(std::move(t));
  }
  for (auto i : result.unmatched_tracks) {
    Track t = tracks.at(i);
    if (++t.misses > cfg.max_misses) continue;
    t.state = TrackState::inactive;
    if (i < est.track_boxes.size()) {
      t.box = est.track_boxes[i];
      t.embedding = est.track_embeddings.row(i).reshaped({1, d});
      t.score = est.track_scores.at(i);
    }
    finish(std::move(t));
  }
  for (auto j : result.spawn) {
    Track t;
    t.id = next_id++;
    t.embedding = est.det_embeddings.row(j).reshaped({1, d});
    t.box = est.det_boxes.at(j);
    t.score = est.det_scores.at(j);
    finish(std::move(t));
  }
  std::stable_sort(next.begin(), next.end(), [](const Track& a, const Track& b) { return a.id < b.id; });
  return next;
}

Tracker::Tracker(const Model& model, TrackerConfig cfg) : model_(model), cfg_(cfg) {}

void Tracker::reset() {
  tracks_.clear();
  aux_.reset();
  last_ = {};
  next_id_ = 0;
}

std::vector<TrackOutput> Tracker::step(const ObservationSet& obs, const EgoPose& pose, const EgoPose& next_pose) {
  const auto& mc = model_.config;
  const auto d = mc.d_k;
  Tape tape;
  tape.set_grad_enabled(false);
  QuerySet q;
  q.num_tracks = tracks_.size();
  if (!tracks_.empty()) {
    std::vector<Tensor> emb;
    std::vector<double> refs;
    for (const auto& t : tracks_) {
      emb.push_back(t.embedding);
      refs.insert(refs.end(), t.refpoint.begin(), t.refpoint.end());
    }
    q.track_embeddings = tape.constant(stack_rows(emb, d));
    q.track_refpoints = tape.constant(Tensor({tracks_.size(), 3}, std::move(refs)));
  }
  if (mc.aux_token) {
    q.aux_token = tape.constant(mc.aux_propagate && aux_ ? *aux_ : model_.params.value("aux.embed"));
  }
  const auto out = decode_frame(tape, model_, q, obs);
  const auto& last = out.layers.back();

  FrameEstimates est;
  est.det_embeddings = tape.value(out.det_embeddings);
  est.det_boxes = tensor_to_boxes(tape.value(last.det_boxes));
  const auto det_scores = ops::sigmoid(tape.value(last.det_logits));
  est.det_scores.assign(det_scores.data().begin(), det_scores.data().end());
  Tensor affinity;
  if (!tracks_.empty()) {
    est.track_embeddings = tape.value(out.track_embeddings);
    est.track_boxes = tensor_to_boxes(tape.value(last.track_boxes));
    const auto ts = ops::sigmoid(tape.value(last.track_logits));
    est.track_scores.assign(ts.data().begin(), ts.data().end());
    affinity = tape.value(last.affinity);
  }
  if (mc.aux_token && mc.aux_propagate) aux_ = tape.value(out.aux_token);

  const auto assoc = associate_infer(affinity, est.det_scores, tracks_.size(), cfg_.tau_s, cfg_.tau_new);
  last_ = {affinity, est.det_scores, tracks_.size(), assoc};
  tracks_ = update_tracks(tracks_, assoc, est, cfg_, pose, next_pose, next_id_);

  std::vector<TrackOutput> emitted;
  for (const auto& t : tracks_) {
    if (t.state != TrackState::active) continue;
    emitted.push_back({t.id, box_to_world(t.box, pose), t.score});
  }
  return emitted;
}

}  // namespace alttrack
