#include "alttrack/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "alttrack/mlp.hpp"

namespace alttrack {
namespace {

constexpr std::size_t kHeadWidth = kBoxParams + 1;
constexpr double kLogSizeRange = 3.0;
// Prior probability of a query being foreground at initialization.
constexpr double kScorePrior = 0.1;

Tensor random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> d(rows * cols);
  for (auto& v : d) v = dist(rng);
  return Tensor({rows, cols}, std::move(d));
}

// Detection reference points start on a regular grid over [-1, 1]^2 (scaled by ref_extent).
Tensor grid_position_embeddings(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const auto rows = (n + cols - 1) / cols;
  auto base = random_matrix(rng, n, d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> data(base.data().begin(), base.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = i / cols, c = i % cols;
    const auto in_row = std::min(cols, n - r * cols);
    data[i * d + 0] = -1.0 + (2.0 * static_cast<double>(c) + 1.0) / static_cast<double>(in_row);
    if (d > 1) data[i * d + 1] = -1.0 + (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(rows);
  }
  return Tensor({n, d}, std::move(data));
}

}  // namespace

ObservationSet ObservationSet::empty(std::size_t d) { return {Tensor({0, d}, {}), Tensor({0, 3}, {})}; }

Model Model::create(const ModelConfig& cfg) {
  if (cfg.d_k < 2 || cfg.num_layers < 1 || cfg.num_det_queries < 1) {
    throw ContractError("model: need d_k >= 2, at least one layer and one detection query");
  }
  Model m;
  m.config = cfg;
  auto& p = m.params;
  std::mt19937_64 rng(cfg.init_seed);
  const auto d = cfg.d_k;

  p.add("det.embed", random_matrix(rng, cfg.num_det_queries, d, 1.0 / std::sqrt(static_cast<double>(d))));
  p.add("det.pos", grid_position_embeddings(rng, cfg.num_det_queries, d));
  std::vector<double> ref_w(d * 3, 0.0);
  ref_w[0 * 3 + 0] = cfg.ref_extent;
  ref_w[1 * 3 + 1] = cfg.ref_extent;
  p.add("det.ref.w", Tensor({d, 3}, std::move(ref_w)));
  p.add("det.ref.b", Tensor::zeros({3}));
  p.add("aux.embed", random_matrix(rng, 1, d, 1.0 / std::sqrt(static_cast<double>(d))));
  add_mlp_params(p, rng, "refenc", {3, d, d});

  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto pre = m.layer_prefix(l);
    for (const char* w : {".sa.wq", ".sa.wk", ".sa.wv", ".obs.wq", ".obs.wk", ".obs.wv"}) {
      p.add(pre + w, init_weight(rng, d, d));
    }
    p.add(pre + ".obs.wrel", init_weight(rng, 3, d));
    add_mlp_params(p, rng, pre + ".ffn", {d, 2 * d, d});
    for (const char* n : {".sa.norm", ".obs.norm", ".ffn.norm"}) {
      p.add(pre + n + ".g", Tensor::filled({d}, 1.0));
      p.add(pre + n + ".b", Tensor::zeros({d}));
    }
    add_mlp_params(p, rng, pre + ".head", {d, d, kHeadWidth});
    std::vector<double> head_bias(kHeadWidth, 0.0);
    head_bias[kBoxParams] = std::log(kScorePrior / (1.0 - kScorePrior));
    p.set(pre + ".head.1.b", Tensor({kHeadWidth}, std::move(head_bias)));
    add_association_params(p, rng, pre + ".asso", d, cfg.pos_encoding);
  }
  add_affinity_head_params(p, rng, "affinity", d);
  return m;
}

Var self_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var queries, Var positional,
                   std::size_t num_tracks, std::size_t num_dets, bool mask_det_to_track, bool mask_track_to_det) {
  const auto n = tape.value(queries).rows();
  const auto d = tape.value(queries).cols();
  if (n == 0) throw ContractError("self_attention: no queries");
  std::vector<char> mask;
  if (mask_det_to_track || mask_track_to_det) {
    mask.assign(n * n, 1);
    const auto is_track = [&](std::size_t i) { return i < num_tracks; };
    const auto is_det = [&](std::size_t i) { return i >= num_tracks && i < num_tracks + num_dets; };
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (mask_det_to_track && is_det(i) && is_track(j)) mask[i * n + j] = 0;
        if (mask_track_to_det && is_track(i) && is_det(j)) mask[i * n + j] = 0;
      }
    }
  }
  const Var xp = tape.add(queries, positional);
  const Var q = tape.matmul(xp, tape.param(store, prefix + ".wq"));
  const Var k = tape.matmul(xp, tape.param(store, prefix + ".wk"));
  const Var v = tape.matmul(queries, tape.param(store, prefix + ".wv"));
  const Var logits = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  const Var attn = tape.softmax_rows(logits, std::move(mask));
  return tape.add(queries, tape.matmul(attn, v));
}

Var observation_cross_attention(Tape& tape, const ParamStore& store, const std::string& prefix, Var queries,
                                Var positional, Var refpoints, const ObservationSet& obs, double tau) {
  if (obs.size() == 0) return queries;
  const auto d = tape.value(queries).cols();
  if (obs.embeddings.cols() != d) throw ContractError("observation attention: token width differs from d_k");
  const Var tokens = tape.constant(obs.embeddings);
  const Var positions = tape.constant(obs.positions);
  const Var q = tape.matmul(tape.add(queries, positional), tape.param(store, prefix + ".wq"));
  const Var k = tape.matmul(tokens, tape.param(store, prefix + ".wk"));
  const Var v = tape.matmul(tokens, tape.param(store, prefix + ".wv"));
  const Var logits = tape.add(tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d))),
                              tape.distance_bias(refpoints, obs.positions, tau));
  const Var attn = tape.softmax_rows(logits);
  const Var relative = tape.scale(tape.sub(tape.matmul(attn, positions), refpoints), 1.0 / tau);
  const Var update = tape.add(tape.matmul(attn, v), tape.matmul(relative, tape.param(store, prefix + ".wrel")));
  return tape.add(queries, update);
}

HeadOutput predict_heads(Tape& tape, const ParamStore& store, const std::string& prefix, Var embeddings,
                         Var refpoints) {
  const Var raw = mlp_forward(tape, store, prefix, embeddings);
  const Var center = tape.add(refpoints, tape.slice_cols(raw, 0, 3));
  // log-size squashed into [-kLogSizeRange, kLogSizeRange]
  const Var unit = tape.sigmoid(tape.slice_cols(raw, 3, 6));
  const Var size = tape.exp(tape.add_constant(tape.scale(unit, 2.0 * kLogSizeRange),
                                              Tensor::filled(tape.value(unit).shape(), -kLogSizeRange)));
  const Var rest = tape.slice_cols(raw, 6, kBoxParams);
  return {tape.concat_cols({center, size, rest}), tape.slice_cols(raw, kBoxParams, kHeadWidth)};
}

namespace {

Var norm(Tape& tape, const ParamStore& store, const std::string& prefix, Var x) {
  return tape.layer_norm(x, tape.param(store, prefix + ".g"), tape.param(store, prefix + ".b"));
}

}  // namespace

std::pair<Var, Var> detection_queries(Tape& tape, const Model& model) {
  const auto& p = model.params;
  const Var pos = tape.param(p, "det.pos");
  const Var embed = tape.add(tape.param(p, "det.embed"), pos);
  const Var refs = tape.linear(pos, tape.param(p, "det.ref.w"), tape.param(p, "det.ref.b"));
  return {embed, refs};
}

FrameOutput decode_frame(Tape& tape, const Model& model, const QuerySet& queries, const ObservationSet& obs) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  const auto d = cfg.d_k;
  const auto n_tracks = queries.num_tracks;
  const auto n_det = cfg.num_det_queries;
  const bool aux = cfg.aux_token;
  if (aux && !queries.aux_token.valid()) throw ContractError("decode_frame: model expects an auxiliary token");
  if (n_tracks > 0 && (!queries.track_embeddings.valid() || !queries.track_refpoints.valid())) {
    throw ContractError("decode_frame: missing track queries");
  }

  FrameOutput out;
  out.num_tracks = n_tracks;
  auto [det_x, det_refs] = detection_queries(tape, model);
  out.det_refpoints = det_refs;

  Var refs = n_tracks > 0 ? tape.concat_rows({queries.track_refpoints, det_refs}) : det_refs;
  Var positional, positional_all;
  auto encode_positions = [&] {
    positional = mlp_forward(tape, p, "refenc", tape.scale(refs, 1.0 / cfg.ref_extent));
    positional_all = aux ? tape.concat_rows({positional, tape.constant(Tensor::zeros({1, d}))}) : positional;
  };
  encode_positions();

  Var track_x = n_tracks > 0 ? queries.track_embeddings : Var{};
  Var aux_x = aux ? queries.aux_token : Var{};
  Var edges;
  const auto n_query = n_tracks + n_det;

  auto assemble = [&](Var dets) {
    std::vector<Var> parts;
    if (n_tracks > 0) parts.push_back(track_x);
    parts.push_back(dets);
    if (aux) parts.push_back(aux_x);
    return parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
  };

  Var x = assemble(det_x);
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const auto pre = model.layer_prefix(l);
    const auto tag = std::to_string(l) + ":";
    LayerOutput lo;

    x = self_attention(tape, p, pre + ".sa", x, positional_all, n_tracks, n_det, cfg.mask_det_to_track,
                       cfg.mask_track_to_det);
    x = norm(tape, p, pre + ".sa.norm", x);
    out.trace.push_back(tag + "self_attention");
    if (aux) aux_x = tape.slice_rows(x, n_query, n_query + 1);
    Var xq = aux ? tape.slice_rows(x, 0, n_query) : x;

    xq = norm(tape, p, pre + ".obs.norm",
              observation_cross_attention(tape, p, pre + ".obs", xq, positional, refs, obs, cfg.tau_pos));
    xq = norm(tape, p, pre + ".ffn.norm", tape.add(xq, mlp_forward(tape, p, pre + ".ffn", xq)));
    out.trace.push_back(tag + "observation_cross_attention");

    const auto heads = predict_heads(tape, p, pre + ".head", xq, refs);
    out.trace.push_back(tag + "predict_heads");
    lo.det_boxes = tape.slice_rows(heads.boxes, n_tracks, n_query);
    lo.det_logits = tape.slice_rows(heads.logits, n_tracks, n_query);
    if (n_tracks > 0) {
      lo.track_boxes = tape.slice_rows(heads.boxes, 0, n_tracks);
      lo.track_logits = tape.slice_rows(heads.logits, 0, n_tracks);
      track_x = tape.slice_rows(xq, 0, n_tracks);
    }
    Var dets = n_tracks > 0 ? tape.slice_rows(xq, n_tracks, n_query) : xq;

    if (n_tracks > 0) {
      const Var keys = aux ? tape.concat_rows({track_x, aux_x}) : track_x;
      const Var pos_enc = build_edge_pos_encoding(tape, p, pre + ".asso", cfg.pos_encoding, lo.track_boxes,
                                                  lo.det_boxes, track_x, dets, aux);
      out.trace.push_back(tag + "build_edge_pos_encoding");
      edges = (edges.valid() && cfg.edge_iteration) ? tape.add(edges, pos_enc) : pos_enc;
      const auto res = edge_augmented_cross_attention(tape, p, pre + ".asso", dets, keys, edges);
      out.trace.push_back(tag + "edge_augmented_cross_attention");
      dets = res.det_queries;
      edges = res.edges;
      out.num_keys = tape.value(keys).rows();
      lo.affinity = affinity_scores(tape, p, "affinity", edges, n_det, out.num_keys);
    }
    x = assemble(dets);
    out.layers.push_back(lo);
    if (cfg.refine_refpoints && l + 1 < cfg.num_layers) {
      refs = tape.slice_cols(heads.boxes, 0, 3);
      encode_positions();
    }
  }

  out.det_embeddings = tape.slice_rows(x, n_tracks, n_query);
  if (n_tracks > 0) out.track_embeddings = tape.slice_rows(x, 0, n_tracks);
  if (aux) out.aux_token = tape.slice_rows(x, n_query, n_query + 1);
  out.edges = edges;
  return out;
}

std::vector<BoxState> tensor_to_boxes(const Tensor& t) {
  std::vector<BoxState> boxes;
  if (t.empty()) return boxes;
  boxes.reserve(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) {
    std::array<double, kBoxParams> v{};
    for (std::size_t k = 0; k < kBoxParams; ++k) v[k] = t.at(i, k);
    for (std::size_t k = 3; k < 6; ++k) v[k] = std::max(v[k], 1e-6);
    boxes.push_back(BoxState::from_vector(v));
  }
  return boxes;
}

}  // namespace alttrack
