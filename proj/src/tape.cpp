#include "alttrack/autodiff.hpp"

#include "alttrack/ops.hpp"

namespace alttrack {

Var Tape::push(Tensor value, bool requires_grad, std::function<void(const Tensor&)> backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

bool Tape::any_requires(std::initializer_list<Var> vs) const {
  for (auto v : vs) {
    if (nodes_.at(v.id).requires_grad) return true;
  }
  return false;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false); }

Var Tape::input(Tensor value) { return push(std::move(value), grad_enabled_, [](const Tensor&) {}); }

Var Tape::param(const ParamStore& store, const std::string& name) {
  if (auto it = params_.find(name); it != params_.end()) return it->second;
  Var v = input(store.value(name));
  nodes_[v.id].param_name = name;
  params_.emplace(name, v);
  return v;
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.id).value; }

Tensor Tape::grad_tensor(Var v) const {
  const auto& n = nodes_.at(v.id);
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return Tensor(n.value.shape(), n.grad);
}

Tensor Tape::grad(Var v) const { return grad_tensor(v); }

void Tape::accumulate(Var v, std::span<const double> g) {
  auto& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (g.size() != n.value.size()) throw ContractError("tape: gradient size mismatch");
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

void Tape::accumulate(Var v, const Tensor& g) { accumulate(v, g.data()); }

void Tape::backward(Var loss) {
  if (value(loss).size() != 1) throw ContractError("tape: backward needs a single-element output");
  for (auto& n : nodes_) n.grad.clear();
  accumulate(loss, std::vector<double>{1.0});
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    const Tensor g(n.value.shape(), n.grad);
    n.backward(g);
  }
}

void Tape::accumulate_param_grads(ParamStore& store) const {
  for (const auto& [name, v] : params_) {
    const auto& n = nodes_[v.id];
    if (!n.grad.empty()) store.accumulate_grad(name, n.grad);
  }
}

Var Tape::matmul(Var a, Var b) {
  return push(ops::matmul(value(a), value(b)), any_requires({a, b}), [this, a, b](const Tensor& g) {
    auto [ga, gb] = ops::matmul_backward(value(a), value(b), g);
    accumulate(a, ga);
    accumulate(b, gb);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  return push(ops::matmul_nt(value(a), value(b)), any_requires({a, b}), [this, a, b](const Tensor& g) {
    auto [ga, gb] = ops::matmul_nt_backward(value(a), value(b), g);
    accumulate(a, ga);
    accumulate(b, gb);
  });
}

Var Tape::linear(Var x, Var w, Var b) {
  return push(ops::linear(value(x), value(w), value(b)), any_requires({x, w, b}),
              [this, x, w, b](const Tensor& g) {
                auto grads = ops::linear_backward(value(x), value(w), g);
                accumulate(x, grads.x);
                accumulate(w, grads.weight);
                accumulate(b, grads.bias);
              });
}

Var Tape::add(Var a, Var b) {
  return push(ops::add(value(a), value(b)), any_requires({a, b}), [this, a, b](const Tensor& g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  return push(ops::sub(value(a), value(b)), any_requires({a, b}), [this, a, b](const Tensor& g) {
    accumulate(a, g);
    accumulate(b, ops::scale(g, -1.0));
  });
}

Var Tape::scale(Var a, double s) {
  return push(ops::scale(value(a), s), any_requires({a}),
              [this, a, s](const Tensor& g) { accumulate(a, ops::scale(g, s)); });
}

Var Tape::hadamard(Var a, Var b) {
  return push(ops::hadamard(value(a), value(b)), any_requires({a, b}), [this, a, b](const Tensor& g) {
    accumulate(a, ops::hadamard(g, value(b)));
    accumulate(b, ops::hadamard(g, value(a)));
  });
}

Var Tape::add_constant(Var a, const Tensor& c) {
  return push(ops::add(value(a), c), any_requires({a}), [this, a](const Tensor& g) { accumulate(a, g); });
}

Var Tape::relu(Var x) {
  return push(ops::relu(value(x)), any_requires({x}),
              [this, x](const Tensor& g) { accumulate(x, ops::relu_backward(value(x), g)); });
}

Var Tape::sigmoid(Var x) {
  auto y = ops::sigmoid(value(x));
  return push(y, any_requires({x}), [this, x, y](const Tensor& g) { accumulate(x, ops::sigmoid_backward(y, g)); });
}

Var Tape::exp(Var x) {
  auto y = ops::exp(value(x));
  return push(y, any_requires({x}), [this, x, y](const Tensor& g) { accumulate(x, ops::exp_backward(y, g)); });
}

Var Tape::softmax_rows(Var m, std::vector<char> mask) {
  auto y = ops::softmax_rows(value(m), mask.empty() ? nullptr : &mask);
  return push(y, any_requires({m}),
              [this, m, y](const Tensor& g) { accumulate(m, ops::softmax_rows_backward(y, g)); });
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
  return push(ops::layer_norm_rows(value(x), value(gain), value(bias)), any_requires({x, gain, bias}),
              [this, x, gain, bias](const Tensor& g) {
                auto grads = ops::layer_norm_rows_backward(value(x), value(gain), g);
                accumulate(x, grads.x);
                accumulate(gain, grads.gain);
                accumulate(bias, grads.bias);
              });
}

Var Tape::pairwise_abs_diff(Var tracks, Var dets, std::optional<std::size_t> wrap_column) {
  return push(ops::pairwise_abs_diff(value(tracks), value(dets), wrap_column), any_requires({tracks, dets}),
              [this, tracks, dets, wrap_column](const Tensor& g) {
                auto [gt, gd] = ops::pairwise_abs_diff_backward(value(tracks), value(dets), wrap_column, g);
                accumulate(tracks, gt);
                accumulate(dets, gd);
              });
}

Var Tape::distance_bias(Var refs, const Tensor& positions, double tau) {
  return push(ops::distance_bias(value(refs), positions, tau), any_requires({refs}),
              [this, refs, positions, tau](const Tensor& g) {
                accumulate(refs, ops::distance_bias_backward(value(refs), positions, tau, g));
              });
}

Var Tape::points_affine(Var points, const Tensor& rotation, const Tensor& translation) {
  return push(ops::points_affine(value(points), rotation, translation), any_requires({points}),
              [this, points, rotation](const Tensor& g) {
                accumulate(points, ops::points_affine_backward(rotation, g));
              });
}

Var Tape::focal_loss_logits(Var logits, std::vector<int> targets, double alpha, double gamma, double weight) {
  auto out = ops::focal_loss_logits(value(logits), targets, alpha, gamma, weight);
  return push(std::move(out), any_requires({logits}),
              [this, logits, targets = std::move(targets), alpha, gamma, weight](const Tensor& g) {
                accumulate(logits, ops::focal_loss_logits_backward(value(logits), targets, alpha, gamma, weight, g));
              });
}

Var Tape::cross_entropy_rows(Var logits, const Tensor& targets) {
  return push(ops::cross_entropy_rows(value(logits), targets), any_requires({logits}),
              [this, logits, targets](const Tensor& g) {
                accumulate(logits, ops::cross_entropy_rows_backward(value(logits), targets, g));
              });
}

Var Tape::box_l1(Var pred, const Tensor& target, double weight) {
  return push(ops::box_l1(value(pred), target, weight), any_requires({pred}),
              [this, pred, target, weight](const Tensor& g) {
                accumulate(pred, ops::box_l1_backward(value(pred), target, weight, g));
              });
}

Var Tape::sum(const std::vector<Var>& scalars) {
  double s = 0;
  bool req = false;
  for (auto v : scalars) {
    s += value(v).item();
    req = req || requires_grad(v);
  }
  return push(Tensor::scalar(s), req, [this, scalars](const Tensor& g) {
    for (auto v : scalars) accumulate(v, g);
  });
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
  return push(value(a).reshaped(std::move(shape)), any_requires({a}),
              [this, a](const Tensor& g) { accumulate(a, g.data()); });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const auto c = value(parts[0]).cols();
  std::vector<double> data;
  std::size_t rows = 0;
  bool req = false;
  for (auto p : parts) {
    const auto& t = value(p);
    if (t.cols() != c) throw ContractError("concat_rows: column mismatch");
    data.insert(data.end(), t.data().begin(), t.data().end());
    rows += t.rows();
    req = req || requires_grad(p);
  }
  return push(Tensor({rows, c}, std::move(data)), req, [this, parts](const Tensor& g) {
    std::size_t off = 0;
    for (auto p : parts) {
      const auto n = value(p).size();
      accumulate(p, g.data().subspan(off, n));
      off += n;
    }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const auto r = value(parts[0]).rows();
  std::size_t cols = 0;
  bool req = false;
  for (auto p : parts) {
    if (value(p).rows() != r) throw ContractError("concat_cols: row mismatch");
    cols += value(p).cols();
    req = req || requires_grad(p);
  }
  std::vector<double> data(r * cols);
  std::size_t off = 0;
  for (auto p : parts) {
    const auto& t = value(p);
    const auto c = t.cols();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) data[i * cols + off + j] = t[i * c + j];
    }
    off += c;
  }
  return push(Tensor({r, cols}, std::move(data)), req, [this, parts, r, cols](const Tensor& g) {
    std::size_t off = 0;
    for (auto p : parts) {
      const auto c = value(p).cols();
      std::vector<double> gp(r * c);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] = g[i * cols + off + j];
      }
      accumulate(p, gp);
      off += c;
    }
  });
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
  const auto& t = value(a);
  const auto c = t.cols();
  if (begin > end || end > t.rows()) throw ContractError("slice_rows: range out of bounds");
  std::vector<double> data(t.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           t.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  const auto total = t.size();
  return push(Tensor({end - begin, c}, std::move(data)), any_requires({a}),
              [this, a, begin, c, total](const Tensor& g) {
                std::vector<double> ga(total, 0.0);
                std::copy(g.data().begin(), g.data().end(), ga.begin() + static_cast<std::ptrdiff_t>(begin * c));
                accumulate(a, ga);
              });
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const auto& t = value(a);
  const auto r = t.rows(), c = t.cols();
  if (begin > end || end > c) throw ContractError("slice_cols: range out of bounds");
  const auto w = end - begin;
  std::vector<double> data(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) data[i * w + j] = t[i * c + begin + j];
  }
  return push(Tensor({r, w}, std::move(data)), any_requires({a}), [this, a, r, c, begin, w](const Tensor& g) {
    std::vector<double> ga(r * c, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] = g[i * w + j];
    }
    accumulate(a, ga);
  });
}

Var Tape::gather_rows(Var a, const std::vector<std::size_t>& rows) {
  const auto& t = value(a);
  const auto c = t.cols(), n = t.rows();
  std::vector<double> data(rows.size() * c);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= n) throw ContractError("gather_rows: index out of bounds");
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(rows[k] * c), c,
                data.begin() + static_cast<std::ptrdiff_t>(k * c));
  }
  const auto total = t.size();
  return push(Tensor({rows.size(), c}, std::move(data)), any_requires({a}),
              [this, a, rows, c, total](const Tensor& g) {
                std::vector<double> ga(total, 0.0);
                for (std::size_t k = 0; k < rows.size(); ++k) {
                  for (std::size_t j = 0; j < c; ++j) ga[rows[k] * c + j] += g[k * c + j];
                }
                accumulate(a, ga);
              });
}

Var Tape::repeat_rows(Var row, std::size_t n) {
  const auto& t = value(row);
  const auto c = t.size();
  std::vector<double> data;
  data.reserve(n * c);
  for (std::size_t i = 0; i < n; ++i) data.insert(data.end(), t.data().begin(), t.data().end());
  return push(Tensor({n, c}, std::move(data)), any_requires({row}), [this, row, n, c](const Tensor& g) {
    std::vector<double> gr(c, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
    }
    accumulate(row, gr);
  });
}

}  // namespace alttrack
