#include "alttrack/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "alttrack/geometry.hpp"

namespace alttrack::ops {
namespace {

void require(bool cond, const char* what) {
  if (!cond) throw ContractError(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ContractError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

Tensor like(const Tensor& t, std::vector<double> data) { return Tensor(t.shape(), std::move(data)); }

Tensor matrix_of(std::size_t r, std::size_t c, std::vector<double> data) { return Tensor({r, c}, std::move(data)); }

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ContractError("matmul: inner dimensions " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double v = A[i * k + p];
      if (v == 0.0) continue;
      const double* brow = B.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += v * brow[j];
    }
  }
  return matrix_of(n, m, std::move(out));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const auto n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) {
    throw ContractError("matmul_nt: inner dimensions " + shape_string(a.shape()) + " x " +
                        shape_string(b.shape()) + "^T");
  }
  std::vector<double> out(n * m, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += A[i * k + p] * B[j * k + p];
      out[i * m + j] = s;
    }
  }
  return matrix_of(n, m, std::move(out));
}

namespace {

// a^T * b
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const auto k = a.rows(), n = a.cols(), m = b.cols();
  require(b.rows() == k, "matmul_tn: inner dimension mismatch");
  std::vector<double> out(n * m, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = B.data() + p * m;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = A[p * n + i];
      if (v == 0.0) continue;
      double* row = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += v * brow[j];
    }
  }
  return matrix_of(n, m, std::move(out));
}

}  // namespace

std::pair<Tensor, Tensor> matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad) {
  return {matmul_nt(grad, b).reshaped(a.shape()), matmul_tn(a, grad).reshaped(b.shape())};
}

std::pair<Tensor, Tensor> matmul_nt_backward(const Tensor& a, const Tensor& b, const Tensor& grad) {
  // y = a b^T: ga = g b, gb = g^T a
  return {matmul(grad, b).reshaped(a.shape()), matmul_tn(grad, a).reshaped(b.shape())};
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.cols() != weight.rows() || bias.size() != weight.cols()) {
    throw ContractError("linear: shapes " + shape_string(x.shape()) + " x " + shape_string(weight.shape()) +
                        " + " + shape_string(bias.shape()));
  }
  const auto y = matmul(x, weight);
  std::vector<double> out(y.data().begin(), y.data().end());
  const auto m = weight.cols();
  const auto b = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % m];
  return matrix_of(x.rows(), m, std::move(out));
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad) {
  auto [gx, gw] = matmul_backward(x.reshaped({x.rows(), x.cols()}), weight, grad);
  const auto m = weight.cols();
  std::vector<double> gb(m, 0.0);
  const auto g = grad.data();
  for (std::size_t i = 0; i < g.size(); ++i) gb[i % m] += g[i];
  return {gx.reshaped(x.shape()), gw, Tensor({m}, std::move(gb))};
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return like(a, std::move(out));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return like(a, std::move(out));
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return like(a, std::move(out));
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return like(a, std::move(out));
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0 ? x[i] : 0.0;
  return like(x, std::move(out));
}

Tensor relu_backward(const Tensor& x, const Tensor& grad) {
  require_same_shape(x, grad, "relu_backward");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0 ? grad[i] : 0.0;
  return like(x, std::move(out));
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return like(x, std::move(out));
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad) {
  require_same_shape(y, grad, "sigmoid_backward");
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = grad[i] * y[i] * (1.0 - y[i]);
  return like(y, std::move(out));
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
  return like(x, std::move(out));
}

Tensor exp_backward(const Tensor& y, const Tensor& grad) { return hadamard(y, grad); }

Tensor softmax_rows(const Tensor& m, const std::vector<char>* mask) {
  const auto n = m.rows(), c = m.cols();
  if (n == 0 || c == 0) throw ContractError("softmax_rows: empty row dimension");
  if (mask && mask->size() != m.size()) throw ContractError("softmax_rows: mask size mismatch");
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!mask || (*mask)[i * c + j]) mx = std::max(mx, m[i * c + j]);
    }
    if (!std::isfinite(mx)) throw ContractError("softmax_rows: row fully masked");
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && !(*mask)[i * c + j]) continue;
      out[i * c + j] = std::exp(m[i * c + j] - mx);
      sum += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
  }
  return like(m, std::move(out));
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& grad) {
  require_same_shape(y, grad, "softmax_rows_backward");
  const auto n = y.rows(), c = y.cols();
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0;
    for (std::size_t j = 0; j < c; ++j) dot += y[i * c + j] * grad[i * c + j];
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = y[i * c + j] * (grad[i * c + j] - dot);
  }
  return like(y, std::move(out));
}

namespace {

struct RowStats {
  double mean, inv_std;
};

RowStats row_stats(const Tensor& x, std::size_t i, double eps) {
  const auto c = x.cols();
  double mean = 0;
  for (std::size_t j = 0; j < c; ++j) mean += x[i * c + j];
  mean /= static_cast<double>(c);
  double var = 0;
  for (std::size_t j = 0; j < c; ++j) var += (x[i * c + j] - mean) * (x[i * c + j] - mean);
  var /= static_cast<double>(c);
  return {mean, 1.0 / std::sqrt(var + eps)};
}

void check_layer_norm(const Tensor& x, const Tensor& gain, const char* what) {
  if (x.rank() != 2 || gain.size() != x.cols()) throw ContractError(std::string(what) + ": gain width mismatch");
}

}  // namespace

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check_layer_norm(x, gain, "layer_norm_rows");
  if (bias.size() != x.cols()) throw ContractError("layer_norm_rows: bias width mismatch");
  const auto n = x.rows(), c = x.cols();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto st = row_stats(x, i, eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (x[i * c + j] - st.mean) * st.inv_std * gain[j] + bias[j];
  }
  return like(x, std::move(out));
}

LayerNormGrads layer_norm_rows_backward(const Tensor& x, const Tensor& gain, const Tensor& grad, double eps) {
  check_layer_norm(x, gain, "layer_norm_rows_backward");
  require_same_shape(x, grad, "layer_norm_rows_backward");
  const auto n = x.rows(), c = x.cols();
  const auto cd = static_cast<double>(c);
  std::vector<double> gx(x.size()), gg(c, 0.0), gb(c, 0.0);
  std::vector<double> xhat(c), gh(c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto st = row_stats(x, i, eps);
    double sum_gh = 0, sum_gh_xhat = 0;
    for (std::size_t j = 0; j < c; ++j) {
      xhat[j] = (x[i * c + j] - st.mean) * st.inv_std;
      gh[j] = grad[i * c + j] * gain[j];
      gg[j] += grad[i * c + j] * xhat[j];
      gb[j] += grad[i * c + j];
      sum_gh += gh[j];
      sum_gh_xhat += gh[j] * xhat[j];
    }
    for (std::size_t j = 0; j < c; ++j) {
      gx[i * c + j] = st.inv_std * (gh[j] - sum_gh / cd - xhat[j] * sum_gh_xhat / cd);
    }
  }
  return {like(x, std::move(gx)), Tensor(gain.shape(), std::move(gg)), Tensor(gain.shape(), std::move(gb))};
}

Tensor pairwise_abs_diff(const Tensor& tracks, const Tensor& dets, std::optional<std::size_t> wrap_column) {
  const auto nt = tracks.rows(), nd = dets.rows(), k = tracks.cols();
  if (dets.cols() != k) throw ContractError("pairwise_abs_diff: feature width mismatch");
  std::vector<double> out(nd * nt * k);
  for (std::size_t j = 0; j < nd; ++j) {
    for (std::size_t i = 0; i < nt; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        double d = tracks[i * k + c] - dets[j * k + c];
        if (wrap_column && *wrap_column == c) d = wrap_angle(d);
        out[(j * nt + i) * k + c] = std::abs(d);
      }
    }
  }
  return matrix_of(nd * nt, k, std::move(out));
}

std::pair<Tensor, Tensor> pairwise_abs_diff_backward(const Tensor& tracks, const Tensor& dets,
                                                     std::optional<std::size_t> wrap_column,
                                                     const Tensor& grad) {
  const auto nt = tracks.rows(), nd = dets.rows(), k = tracks.cols();
  std::vector<double> gt(tracks.size(), 0.0), gd(dets.size(), 0.0);
  for (std::size_t j = 0; j < nd; ++j) {
    for (std::size_t i = 0; i < nt; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        double d = tracks[i * k + c] - dets[j * k + c];
        if (wrap_column && *wrap_column == c) d = wrap_angle(d);
        const double g = grad[(j * nt + i) * k + c] * sign(d);
        gt[i * k + c] += g;
        gd[j * k + c] -= g;
      }
    }
  }
  return {like(tracks, std::move(gt)), like(dets, std::move(gd))};
}

Tensor distance_bias(const Tensor& refs, const Tensor& positions, double tau) {
  require(tau > 0, "distance_bias: tau must be positive");
  require(refs.cols() == 3 && positions.cols() == 3, "distance_bias: points must be 3D");
  const auto n = refs.rows(), m = positions.rows();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      double d2 = 1e-9;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = refs[i * 3 + c] - positions[k * 3 + c];
        d2 += d * d;
      }
      out[i * m + k] = -std::sqrt(d2) / tau;
    }
  }
  return matrix_of(n, m, std::move(out));
}

Tensor distance_bias_backward(const Tensor& refs, const Tensor& positions, double tau, const Tensor& grad) {
  const auto n = refs.rows(), m = positions.rows();
  std::vector<double> g(refs.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      double d[3];
      double d2 = 1e-9;
      for (std::size_t c = 0; c < 3; ++c) {
        d[c] = refs[i * 3 + c] - positions[k * 3 + c];
        d2 += d[c] * d[c];
      }
      const double inv = -grad[i * m + k] / (tau * std::sqrt(d2));
      for (std::size_t c = 0; c < 3; ++c) g[i * 3 + c] += inv * d[c];
    }
  }
  return like(refs, std::move(g));
}

Tensor points_affine(const Tensor& points, const Tensor& rotation, const Tensor& translation) {
  require(points.cols() == 3 && rotation.size() == 9 && translation.size() == 3, "points_affine: shape");
  const auto n = points.rows();
  std::vector<double> out(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < 3; ++r) {
      double s = translation[r];
      for (std::size_t c = 0; c < 3; ++c) s += rotation[r * 3 + c] * points[i * 3 + c];
      out[i * 3 + r] = s;
    }
  }
  return like(points, std::move(out));
}

Tensor points_affine_backward(const Tensor& rotation, const Tensor& grad) {
  const auto n = grad.rows();
  std::vector<double> out(n * 3, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t r = 0; r < 3; ++r) s += rotation[r * 3 + c] * grad[i * 3 + r];
      out[i * 3 + c] = s;
    }
  }
  return like(grad, std::move(out));
}

double focal_loss(double p, int target, double alpha, double gamma, double eps) {
  p = std::clamp(p, eps, 1.0 - eps);
  if (target == 1) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

namespace {

constexpr double kFocalEps = 1e-7;

double sigmoid_scalar(double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); }

// d focal / d p, zero where the clamp is active.
double focal_dp(double p, int target, double alpha, double gamma) {
  if (p <= kFocalEps || p >= 1.0 - kFocalEps) return 0.0;
  if (target == 1) {
    const double q = 1.0 - p;
    const double pow_term = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0) * std::log(p);
    return alpha * (pow_term - std::pow(q, gamma) / p);
  }
  const double pow_term = gamma == 0.0 ? 0.0 : gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p);
  return -(1.0 - alpha) * (pow_term - std::pow(p, gamma) / (1.0 - p));
}

}  // namespace

Tensor focal_loss_logits(const Tensor& logits, const std::vector<int>& targets, double alpha, double gamma,
                         double weight) {
  require(targets.size() == logits.size(), "focal_loss_logits: target count mismatch");
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    s += focal_loss(sigmoid_scalar(logits[i]), targets[i], alpha, gamma, kFocalEps);
  }
  return Tensor::scalar(weight * s);
}

Tensor focal_loss_logits_backward(const Tensor& logits, const std::vector<int>& targets, double alpha,
                                  double gamma, double weight, const Tensor& grad) {
  const double g = grad.item() * weight;
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid_scalar(logits[i]);
    out[i] = g * focal_dp(p, targets[i], alpha, gamma) * p * (1.0 - p);
  }
  return like(logits, std::move(out));
}

Tensor cross_entropy_rows(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "cross_entropy_rows");
  const auto n = logits.rows(), c = logits.cols();
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits[i * c + j]);
    double sum = 0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits[i * c + j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < c; ++j) loss -= targets[i * c + j] * (logits[i * c + j] - lse);
  }
  return Tensor::scalar(loss);
}

Tensor cross_entropy_rows_backward(const Tensor& logits, const Tensor& targets, const Tensor& grad) {
  const auto p = softmax_rows(logits);
  const auto n = logits.rows(), c = logits.cols();
  const double g = grad.item();
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < n; ++i) {
    double ysum = 0;
    for (std::size_t j = 0; j < c; ++j) ysum += targets[i * c + j];
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = g * (p[i * c + j] * ysum - targets[i * c + j]);
  }
  return like(logits, std::move(out));
}

namespace {

double box_param_diff(const Tensor& pred, const Tensor& target, std::size_t idx) {
  const double d = pred[idx] - target[idx];
  return idx % kBoxParams == kYawIndex ? wrap_angle(d) : d;
}

}  // namespace

Tensor box_l1(const Tensor& pred, const Tensor& target, double weight) {
  require_same_shape(pred, target, "box_l1");
  require(pred.cols() == kBoxParams, "box_l1: boxes must have 9 parameters");
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(box_param_diff(pred, target, i));
  return Tensor::scalar(weight * s);
}

Tensor box_l1_backward(const Tensor& pred, const Tensor& target, double weight, const Tensor& grad) {
  const double g = grad.item() * weight;
  std::vector<double> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = g * sign(box_param_diff(pred, target, i));
  return like(pred, std::move(out));
}

}  // namespace alttrack::ops
