#pragma once

// Differentiable primitives. Every forward function has a matching *_backward that maps the
// upstream gradient onto the inputs. These are pure functions over Tensor values; the Tape in
// autodiff.hpp only sequences them.

#include <optional>
#include <utility>
#include <vector>

#include "alttrack/tensor.hpp"

namespace alttrack::ops {

struct LinearGrads {
  Tensor x, weight, bias;
};

Tensor matmul(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad);

/// a * b^T
Tensor matmul_nt(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> matmul_nt_backward(const Tensor& a, const Tensor& b, const Tensor& grad);

/// y = x W + b for x[n,din], W[din,dout], b[dout].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad);

Tensor exp(const Tensor& x);
Tensor exp_backward(const Tensor& y, const Tensor& grad);

/// Row-wise softmax with max subtraction. Masked entries (mask[i*m+j] == 0) get exactly zero
/// probability; every row must keep at least one unmasked entry.
Tensor softmax_rows(const Tensor& m, const std::vector<char>* mask = nullptr);
Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad);

/// Per-row normalization to zero mean and unit variance followed by gain[d] * x + bias[d].
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
struct LayerNormGrads {
  Tensor x, gain, bias;
};
LayerNormGrads layer_norm_rows_backward(const Tensor& x, const Tensor& gain, const Tensor& grad, double eps = 1e-5);

/// Pairwise |track_i - det_j| laid out as rows j*N_T + i. `wrap_column`, when set, holds an
/// angle whose difference is wrapped to [-pi, pi] before the absolute value.
Tensor pairwise_abs_diff(const Tensor& tracks, const Tensor& dets, std::optional<std::size_t> wrap_column);
std::pair<Tensor, Tensor> pairwise_abs_diff_backward(const Tensor& tracks, const Tensor& dets,
                                                     std::optional<std::size_t> wrap_column,
                                                     const Tensor& grad);

/// bias[i,k] = -sqrt(|ref_i - pos_k|^2 + eps) / tau. Gradient flows into refs only.
Tensor distance_bias(const Tensor& refs, const Tensor& positions, double tau);
Tensor distance_bias_backward(const Tensor& refs, const Tensor& positions, double tau, const Tensor& grad);

/// y_i = R x_i + t for points x[n,3].
Tensor points_affine(const Tensor& points, const Tensor& rotation, const Tensor& translation);
Tensor points_affine_backward(const Tensor& rotation, const Tensor& grad);

/// Focal loss on a single probability; p is clamped into [eps, 1-eps].
double focal_loss(double p, int target, double alpha, double gamma, double eps = 1e-7);

/// Sum of focal losses of sigmoid(logits) against 0/1 targets, scaled by `weight`.
Tensor focal_loss_logits(const Tensor& logits, const std::vector<int>& targets, double alpha,
                         double gamma, double weight = 1.0);
Tensor focal_loss_logits_backward(const Tensor& logits, const std::vector<int>& targets, double alpha,
                                  double gamma, double weight, const Tensor& grad);

/// -sum_j sum_i Y[j,i] log softmax_row(S)[j,i].
Tensor cross_entropy_rows(const Tensor& logits, const Tensor& targets);
Tensor cross_entropy_rows_backward(const Tensor& logits, const Tensor& targets, const Tensor& grad);

/// Sum over rows of L1 distance between 9-parameter boxes; the yaw column uses the wrapped
/// angle difference. Scaled by `weight`.
Tensor box_l1(const Tensor& pred, const Tensor& target, double weight = 1.0);
Tensor box_l1_backward(const Tensor& pred, const Tensor& target, double weight, const Tensor& grad);

}  // namespace alttrack::ops
