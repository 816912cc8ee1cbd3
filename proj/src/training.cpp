#include "alttrack/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "alttrack/ops.hpp"
#include "alttrack/tracker.hpp"

namespace alttrack {
namespace {

double focal_cost(double p, int target, const LossConfig& cfg) {
  return ops::focal_loss(p, target, cfg.cls_alpha, cfg.cls_gamma);
}

double l1_cost(const Tensor& boxes, std::size_t row, const BoxState& gt) {
  const auto g = gt.to_vector();
  double s = 0.0;
  for (std::size_t k = 0; k < kBoxParams; ++k) {
    const double diff = boxes.at(row, k) - g[k];
    s += std::abs(k == kYawIndex ? wrap_angle(diff) : diff);
  }
  return s;
}

Tensor boxes_tensor(const std::vector<BoxState>& boxes) { return boxes_to_tensor(boxes); }

// Maps a [n, 9] box tensor to reference points advanced by the box velocity over dt.
Tensor propagation_matrix(double dt) {
  std::vector<double> m(kBoxParams * 3, 0.0);
  m[0 * 3 + 0] = m[1 * 3 + 1] = m[2 * 3 + 2] = 1.0;
  m[7 * 3 + 0] = dt;
  m[8 * 3 + 1] = dt;
  return Tensor({kBoxParams, 3}, std::move(m));
}

void add_terms(LossTerms& acc, const Tape& tape, const LossVars& v) {
  auto val = [&](Var x) { return x.valid() ? tape.value(x).item() : 0.0; };
  acc.cls_d += val(v.cls_d);
  acc.reg_d += val(v.reg_d);
  acc.cls_t += val(v.cls_t);
  acc.reg_t += val(v.reg_t);
  acc.asso_fl += val(v.asso_fl);
  acc.asso_ce += val(v.asso_ce);
}

}  // namespace

FrameTargets visible_targets(const Scenario& s, std::size_t frame) {
  std::set<int> seen;
  for (const auto& t : s.frames.at(frame).tokens)
    if (t.source >= 0) seen.insert(t.source);
  FrameTargets out;
  for (const auto& o : s.vehicle_frame_objects(frame)) {
    if (!seen.contains(o.id)) continue;
    out.ids.push_back(o.id);
    out.boxes.push_back(o.box);
  }
  return out;
}

std::vector<std::vector<double>> detection_match_cost(const Tensor& det_logits, const Tensor& det_boxes,
                                                      const FrameTargets& gt, const LossConfig& cfg) {
  const auto n_det = det_logits.rows();
  std::vector<std::vector<double>> cost(gt.ids.size(), std::vector<double>(n_det));
  for (std::size_t j = 0; j < n_det; ++j) {
    const double p = 1.0 / (1.0 + std::exp(-det_logits.at(j, 0)));
    const double cls = focal_cost(p, 1, cfg) - focal_cost(p, 0, cfg);
    for (std::size_t g = 0; g < gt.ids.size(); ++g) {
      cost[g][j] = cfg.lambda_cls * cls + cfg.lambda_reg * l1_cost(det_boxes, j, gt.boxes[g]);
    }
  }
  return cost;
}

AssignmentTargets assign_targets(std::span<const int> prev_track_ids, const Tensor& det_logits, const Tensor& det_boxes,
                                 const FrameTargets& gt, const LossConfig& cfg, bool with_aux) {
  std::set<int> ids(gt.ids.begin(), gt.ids.end());
  if (ids.size() != gt.ids.size()) throw ContractError("assign_targets: duplicate ground-truth id");
  AssignmentTargets t;
  const auto n_det = det_logits.rows();
  const auto n_tracks = prev_track_ids.size();
  for (int id : prev_track_ids) t.track_ids.push_back(id >= 0 && ids.contains(id) ? id : -1);
  t.det_ids.assign(n_det, -1);
  if (!gt.ids.empty()) {
    for (const auto& [g, j] : hungarian(detection_match_cost(det_logits, det_boxes, gt, cfg))) t.det_ids[j] = gt.ids[g];
  }
  const auto n_keys = n_tracks + (with_aux ? 1 : 0);
  if (n_keys > 0) {
    std::vector<double> y(n_det * n_keys, 0.0);
    for (std::size_t j = 0; j < n_det; ++j) {
      bool hit = false;
      for (std::size_t i = 0; i < n_tracks; ++i) {
        if (t.det_ids[j] >= 0 && t.track_ids[i] == t.det_ids[j]) {
          y[j * n_keys + i] = 1.0;
          hit = true;
        }
      }
      if (with_aux && !hit) y[j * n_keys + n_tracks] = 1.0;
    }
    t.y = Tensor({n_det, n_keys}, std::move(y));
  }
  return t;
}

Var total_loss(Tape& tape, const std::vector<std::vector<LossVars>>& frames, const LossConfig& cfg) {
  std::vector<Var> parts;
  auto push = [&](Var v, double w) {
    if (v.valid() && w != 0.0) parts.push_back(tape.scale(v, w));
  };
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (const auto& l : frames[t]) {
      push(l.cls_d, cfg.lambda_cls);
      push(l.reg_d, cfg.lambda_reg);
      if (t == 0) continue;
      push(l.cls_t, cfg.lambda_cls);
      push(l.reg_t, cfg.lambda_reg);
      push(l.asso_fl, cfg.lambda_asso);
      push(l.asso_ce, cfg.lambda_asso * cfg.lambda_ce);
    }
  }
  if (parts.empty()) return tape.constant(Tensor::scalar(0.0));
  return tape.sum(parts);
}

double total_loss(const std::vector<std::vector<LossTerms>>& frames, const LossConfig& cfg) {
  double s = 0.0;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (const auto& l : frames[t]) {
      s += cfg.lambda_cls * l.cls_d + cfg.lambda_reg * l.reg_d;
      if (t == 0) continue;
      s += cfg.lambda_cls * l.cls_t + cfg.lambda_reg * l.reg_t + cfg.lambda_asso * (l.asso_fl + cfg.lambda_ce * l.asso_ce);
    }
  }
  return s;
}

SequenceLoss sequence_loss(Tape& tape, const Model& model, const Scenario& scenario, std::size_t start,
                           std::size_t len, const TrainConfig& cfg) {
  if (len == 0 || start + len > scenario.frames.size()) {
    throw ContractError("sequence_loss: frames [" + std::to_string(start) + ", " + std::to_string(start + len) +
                        ") exceed a scenario of " + std::to_string(scenario.frames.size()) + " frames");
  }
  const auto& mc = model.config;
  const auto& lc = cfg.loss;
  const Tensor prop = propagation_matrix(scenario.config.dt);

  Var track_emb, track_ref;
  std::vector<int> track_ids;
  Var aux = mc.aux_token ? tape.param(model.params, "aux.embed") : Var{};
  SequenceLoss out;

  for (std::size_t t = 0; t < len; ++t) {
    const auto f = start + t;
    const auto gt = visible_targets(scenario, f);
    const QuerySet q{track_emb, track_ref, aux, track_ids.size()};
    const auto fo = decode_frame(tape, model, q, scenario.observations(f));
    const double norm_gt = std::max<double>(1.0, static_cast<double>(gt.ids.size()));

    std::vector<LossVars> layers;
    AssignmentTargets last;
    for (std::size_t l = 0; l < fo.layers.size(); ++l) {
      const auto& lo = fo.layers[l];
      auto tg = assign_targets(track_ids, tape.value(lo.det_logits), tape.value(lo.det_boxes), gt, lc, mc.aux_token);
      LossVars lv;

      std::vector<int> det_pos(tg.det_ids.size());
      std::vector<std::size_t> rows;
      std::vector<BoxState> targets;
      for (std::size_t j = 0; j < tg.det_ids.size(); ++j) {
        det_pos[j] = tg.det_ids[j] >= 0;
        if (!det_pos[j]) continue;
        rows.push_back(j);
        const auto g = std::find(gt.ids.begin(), gt.ids.end(), tg.det_ids[j]) - gt.ids.begin();
        targets.push_back(gt.boxes[static_cast<std::size_t>(g)]);
      }
      lv.cls_d = tape.focal_loss_logits(lo.det_logits, det_pos, lc.cls_alpha, lc.cls_gamma, 1.0 / norm_gt);
      if (!rows.empty()) {
        lv.reg_d = tape.box_l1(tape.gather_rows(lo.det_boxes, rows), boxes_tensor(targets),
                               1.0 / static_cast<double>(rows.size()));
      }

      if (!track_ids.empty()) {
        std::vector<int> tr_pos(track_ids.size());
        std::vector<std::size_t> tr_rows;
        std::vector<BoxState> tr_targets;
        for (std::size_t i = 0; i < track_ids.size(); ++i) {
          tr_pos[i] = tg.track_ids[i] >= 0;
          if (!tr_pos[i]) continue;
          tr_rows.push_back(i);
          const auto g = std::find(gt.ids.begin(), gt.ids.end(), tg.track_ids[i]) - gt.ids.begin();
          tr_targets.push_back(gt.boxes[static_cast<std::size_t>(g)]);
        }
        const double norm_tr = std::max<double>(1.0, static_cast<double>(tr_rows.size()));
        lv.cls_t = tape.focal_loss_logits(lo.track_logits, tr_pos, lc.cls_alpha, lc.cls_gamma, 1.0 / norm_tr);
        if (!tr_rows.empty()) {
          lv.reg_t = tape.box_l1(tape.gather_rows(lo.track_boxes, tr_rows), boxes_tensor(tr_targets), 1.0 / norm_tr);
        }

        const auto& y = tg.y;
        std::vector<int> flat(y.size());
        std::size_t positives = 0;
        for (std::size_t k = 0; k < y.size(); ++k) {
          flat[k] = y[k] > 0.5;
          positives += static_cast<std::size_t>(flat[k]);
        }
        const Var s = tape.reshape(lo.affinity, {y.size(), 1});
        lv.asso_fl = tape.focal_loss_logits(s, flat, lc.asso_alpha, lc.asso_gamma,
                                            1.0 / std::max<double>(1.0, static_cast<double>(positives)));
        if (mc.aux_token) lv.asso_ce = tape.cross_entropy_rows(lo.affinity, y);
      }
      layers.push_back(lv);
      if (l + 1 == fo.layers.size()) last = std::move(tg);
    }
    out.terms.push_back(std::move(layers));

    if (t + 1 == len) break;
    const auto assoc = associate_train(track_ids, last.det_ids);
    std::vector<std::size_t> m_tracks, m_dets, next_dets;
    std::vector<int> next_ids;
    for (const auto& [i, j] : assoc.matches) {
      m_tracks.push_back(i);
      m_dets.push_back(j);
      next_dets.push_back(j);
      next_ids.push_back(track_ids[i]);
    }
    for (auto j : assoc.spawn) {
      next_dets.push_back(j);
      next_ids.push_back(last.det_ids[j]);
    }
    if (next_dets.empty()) {
      track_emb = track_ref = Var{};
    } else {
      std::vector<Var> emb_parts;
      if (!m_dets.empty()) {
        Var matched = tape.gather_rows(fo.det_embeddings, m_dets);
        if (cfg.w_t != 0.0) {
          matched = tape.add(tape.scale(tape.gather_rows(fo.track_embeddings, m_tracks), cfg.w_t),
                             tape.scale(matched, 1.0 - cfg.w_t));
        }
        emb_parts.push_back(matched);
      }
      if (!assoc.spawn.empty()) emb_parts.push_back(tape.gather_rows(fo.det_embeddings, assoc.spawn));
      track_emb = emb_parts.size() == 1 ? emb_parts[0] : tape.concat_rows(emb_parts);

      const Var boxes = tape.gather_rows(fo.layers.back().det_boxes, next_dets);
      const Var advanced = tape.matmul(boxes, tape.constant(prop));
      const auto tr = ego_transform(scenario.frames[f].pose, scenario.frames[f + 1].pose);
      track_ref = tape.points_affine(advanced, Tensor({3, 3}, std::vector<double>(tr.rotation.begin(), tr.rotation.end())),
                                     Tensor({3}, std::vector<double>(tr.translation.begin(), tr.translation.end())));
    }
    track_ids = std::move(next_ids);
    if (mc.aux_token) aux = mc.aux_propagate ? fo.aux_token : tape.param(model.params, "aux.embed");
  }
  out.total = total_loss(tape, out.terms, lc);
  return out;
}

StepReport train_step(Model& model, AdamW& opt, const Scenario& scenario, std::size_t start, const TrainConfig& cfg) {
  return train_step(model, opt, {{&scenario, start}}, cfg);
}

StepReport train_step(Model& model, AdamW& opt, const std::vector<std::pair<const Scenario*, std::size_t>>& batch,
                      const TrainConfig& cfg) {
  StepReport rep;
  model.params.zero_grad();
  try {
    for (const auto& [scenario, start] : batch) {
      Tape tape;
      const auto sl = sequence_loss(tape, model, *scenario, start, cfg.seq_len, cfg);
      const double total = tape.value(sl.total).item();
      if (!std::isfinite(total)) throw NonFiniteError("loss is " + std::to_string(total));
      rep.total += total;
      for (const auto& frame : sl.terms)
        for (const auto& l : frame) add_terms(rep.terms, tape, l);
      tape.backward(sl.total);
      tape.accumulate_param_grads(model.params);
    }
  } catch (const NonFiniteError& e) {
    model.params.zero_grad();
    throw DivergenceError("non-finite value at step " + std::to_string(model.params.step()) + ": " + e.what());
  }
  const double norm = model.params.grad_norm();
  if (!std::isfinite(norm)) {
    model.params.zero_grad();
    throw DivergenceError("non-finite gradient at step " + std::to_string(model.params.step()));
  }
  if (cfg.grad_clip > 0 && norm > cfg.grad_clip) model.params.scale_grad(cfg.grad_clip / norm);
  opt.step(model.params);
  return rep;
}

std::vector<StepReport> train(Model& model, const std::vector<Scenario>& data, const TrainConfig& cfg,
                              const StepCallback& on_step) {
  if (data.empty()) throw ContractError("train: empty dataset");
  for (const auto& s : data) {
    if (s.frames.size() < cfg.seq_len) throw ContractError("train: scenario shorter than the mini-sequence length");
  }
  std::mt19937_64 rng(cfg.seed);
  AdamW opt(cfg.optimizer);
  std::vector<StepReport> log;
  log.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<std::pair<const Scenario*, std::size_t>> batch;
    for (std::size_t b = 0; b < std::max<std::size_t>(1, cfg.batch); ++b) {
      const auto& s = data[std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng)];
      const auto start = std::uniform_int_distribution<std::size_t>(0, s.frames.size() - cfg.seq_len)(rng);
      batch.emplace_back(&s, start);
    }
    if (cfg.cosine_decay) {
      opt.set_lr(cfg.optimizer.lr * 0.5 *
                 (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.steps))));
    }
    log.push_back(train_step(model, opt, batch, cfg));
    if (on_step) on_step(step, log.back());
  }
  return log;
}

}  // namespace alttrack
