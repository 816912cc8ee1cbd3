#include "alttrack/association.hpp"

#include <cmath>

#include "alttrack/mlp.hpp"

namespace alttrack {

PosEncoding parse_pos_encoding(const std::string& s) {
  if (s == "box") return PosEncoding::box;
  if (s == "center") return PosEncoding::center;
  if (s == "none") return PosEncoding::none;
  if (s == "appearance") return PosEncoding::appearance;
  throw ContractError("unknown pos encoding '" + s + "' (expected box, center, none or appearance)");
}

std::string to_string(PosEncoding p) {
  switch (p) {
    case PosEncoding::box: return "box";
    case PosEncoding::center: return "center";
    case PosEncoding::none: return "none";
    case PosEncoding::appearance: return "appearance";
  }
  return "box";
}

namespace {

std::size_t encoding_width(PosEncoding e, std::size_t d) {
  switch (e) {
    case PosEncoding::box: return kBoxParams;
    case PosEncoding::center: return 3;
    case PosEncoding::appearance: return d;
    case PosEncoding::none: return 0;
  }
  return 0;
}

}  // namespace

void add_association_params(ParamStore& store, std::mt19937_64& rng, const std::string& prefix, std::size_t d,
                            PosEncoding encoding) {
  store.add(prefix + ".wq", init_weight(rng, d, d));
  store.add(prefix + ".wk", init_weight(rng, d, d));
  store.add(prefix + ".wv", init_weight(rng, d, d));
  store.add(prefix + ".we1", init_weight(rng, d, 1));
  store.add(prefix + ".we2", init_weight(rng, 1, d));
  if (const auto w = encoding_width(encoding, d); w > 0) {
    add_mlp_params(store, rng, prefix + ".pos", {w, d, d});
    store.add(prefix + ".aux_pos", init_weight(rng, d, 1).reshaped({1, d}));
  }
}

void add_affinity_head_params(ParamStore& store, std::mt19937_64& rng, const std::string& prefix, std::size_t d) {
  add_mlp_params(store, rng, prefix, {d, d, 1});
}

Var build_edge_pos_encoding(Tape& tape, const ParamStore& store, const std::string& prefix, PosEncoding encoding,
                            Var track_boxes, Var det_boxes, Var track_queries, Var det_queries, bool with_aux) {
  const auto n_tracks = tape.value(track_queries).rows();
  const auto n_det = tape.value(det_queries).rows();
  const auto d = tape.value(det_queries).cols();
  const auto n_keys = n_tracks + (with_aux ? 1 : 0);
  if (n_keys == 0 || n_det == 0) throw ContractError("edge pos encoding: need at least one key and one detection");
  if (encoding == PosEncoding::none) return tape.constant(Tensor::zeros({n_det * n_keys, d}));

  Var diff;
  if (n_tracks > 0) {
    switch (encoding) {
      case PosEncoding::box:
        diff = tape.pairwise_abs_diff(track_boxes, det_boxes, kYawIndex);
        break;
      case PosEncoding::center:
        diff = tape.pairwise_abs_diff(tape.slice_cols(track_boxes, 0, 3), tape.slice_cols(det_boxes, 0, 3), std::nullopt);
        break;
      case PosEncoding::appearance:
        diff = tape.pairwise_abs_diff(track_queries, det_queries, std::nullopt);
        break;
      case PosEncoding::none:
        break;
    }
  }
  if (!with_aux) return mlp_forward(tape, store, prefix + ".pos", diff);

  const Var aux_cols = tape.repeat_rows(tape.param(store, prefix + ".aux_pos"), n_det);
  if (n_tracks == 0) return aux_cols;
  const Var per_det = tape.reshape(mlp_forward(tape, store, prefix + ".pos", diff), {n_det, n_tracks * d});
  return tape.reshape(tape.concat_cols({per_det, aux_cols}), {n_det * n_keys, d});
}

Tensor boxes_to_tensor(std::span<const BoxState> boxes) {
  std::vector<double> d;
  d.reserve(boxes.size() * kBoxParams);
  for (const auto& b : boxes) {
    const auto v = b.to_vector();
    d.insert(d.end(), v.begin(), v.end());
  }
  return Tensor({boxes.size(), kBoxParams}, std::move(d));
}

Tensor build_edge_pos_encoding(const ParamStore& store, const std::string& prefix,
                               std::span<const BoxState> track_boxes, std::span<const BoxState> det_boxes) {
  if (track_boxes.empty() || det_boxes.empty()) throw ContractError("edge pos encoding: empty box list");
  Tape tape;
  const auto d = store.value(prefix + ".wq").rows();
  const Var tb = tape.constant(boxes_to_tensor(track_boxes));
  const Var db = tape.constant(boxes_to_tensor(det_boxes));
  const Var tq = tape.constant(Tensor::zeros({track_boxes.size(), d}));
  const Var dq = tape.constant(Tensor::zeros({det_boxes.size(), d}));
  return tape.value(build_edge_pos_encoding(tape, store, prefix, PosEncoding::box, tb, db, tq, dq, false));
}

EdgeAttentionResult edge_augmented_cross_attention(Tape& tape, const ParamStore& store, const std::string& prefix,
                                                   Var det_queries, Var keys, Var edges) {
  const auto n_det = tape.value(det_queries).rows();
  const auto n_keys = tape.value(keys).rows();
  const auto d = tape.value(det_queries).cols();
  if (n_keys == 0) throw ContractError("edge-augmented attention: no keys");
  if (tape.value(edges).rows() != n_det * n_keys || tape.value(edges).cols() != d) {
    throw ContractError("edge-augmented attention: edge tensor must be [N_D*N_K, d]");
  }
  const Var q = tape.matmul(det_queries, tape.param(store, prefix + ".wq"));
  const Var k = tape.matmul(keys, tape.param(store, prefix + ".wk"));
  const Var v = tape.matmul(keys, tape.param(store, prefix + ".wv"));
  const Var dot = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  const Var edge_logit = tape.reshape(tape.matmul(edges, tape.param(store, prefix + ".we1")), {n_det, n_keys});
  const Var attn = tape.softmax_rows(tape.add(dot, edge_logit));
  const Var q_next = tape.add(det_queries, tape.matmul(attn, v));
  const Var a_col = tape.reshape(attn, {n_det * n_keys, 1});
  const Var e_next = tape.add(edges, tape.matmul(a_col, tape.param(store, prefix + ".we2")));
  return {q_next, e_next, attn};
}

Var affinity_scores(Tape& tape, const ParamStore& store, const std::string& prefix, Var edges, std::size_t n_det,
                    std::size_t n_keys) {
  return tape.reshape(mlp_forward(tape, store, prefix, edges), {n_det, n_keys});
}

}  // namespace alttrack
