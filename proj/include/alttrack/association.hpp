#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "alttrack/autodiff.hpp"
#include "alttrack/geometry.hpp"

namespace alttrack {

/// What the edge position encoding is computed from.
enum class PosEncoding {
  box,         ///< all 9 box parameters
  center,      ///< box centers only
  none,        ///< no geometric encoding; edges start at zero and evolve through attention
  appearance,  ///< |q_T - q_D| of the query embeddings
};

PosEncoding parse_pos_encoding(const std::string& s);
std::string to_string(PosEncoding p);

/// Registers the per-layer association weights under `prefix`:
/// wq, wk, wv [d,d], we1 [d,1], we2 [1,d], the encoding MLP `pos` and the auxiliary column
/// encoding `aux_pos` [1,d].
void add_association_params(ParamStore& store, std::mt19937_64& rng, const std::string& prefix, std::size_t d,
                            PosEncoding encoding);

/// Registers the shared affinity head MLP (d -> d -> 1) under `prefix`.
void add_affinity_head_params(ParamStore& store, std::mt19937_64& rng, const std::string& prefix, std::size_t d);

/// Edge position encoding laid out as rows j * N_K + i (detection j, key i), width d.
/// With `with_aux` an extra key column per detection holds the learned `aux_pos` vector.
/// Returns an all-zero tensor for PosEncoding::none.
Var build_edge_pos_encoding(Tape& tape, const ParamStore& store, const std::string& prefix, PosEncoding encoding,
                            Var track_boxes, Var det_boxes, Var track_queries, Var det_queries, bool with_aux);

/// Convenience form over BoxState lists (box encoding, no auxiliary column).
Tensor build_edge_pos_encoding(const ParamStore& store, const std::string& prefix,
                               std::span<const BoxState> track_boxes, std::span<const BoxState> det_boxes);

struct EdgeAttentionResult {
  Var det_queries;  ///< [N_D, d]
  Var edges;        ///< [N_D * N_K, d]
  Var attention;    ///< [N_D, N_K], row-stochastic
};

/// A = softmax((Q_D W_Q)(K W_K)^T / sqrt(d) + E W_E1); Q_D' = Q_D + A (K W_V); E' = E + A W_E2.
/// Throws ContractError when there are no keys.
EdgeAttentionResult edge_augmented_cross_attention(Tape& tape, const ParamStore& store, const std::string& prefix,
                                                   Var det_queries, Var keys, Var edges);

/// Raw affinity S[N_D, N_K] = MLP(E).
Var affinity_scores(Tape& tape, const ParamStore& store, const std::string& prefix, Var edges, std::size_t n_det,
                    std::size_t n_keys);

/// Stacks boxes into an [n, 9] tensor.
Tensor boxes_to_tensor(std::span<const BoxState> boxes);

}  // namespace alttrack
