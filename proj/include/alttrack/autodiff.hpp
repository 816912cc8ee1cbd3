#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "alttrack/params.hpp"
#include "alttrack/tensor.hpp"

namespace alttrack {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

/// Linear record of forward computations. Each recorded op stores a closure that calls the
/// op's hand-written backward from ops.hpp; backward() replays them in reverse order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that collects a gradient.
  Var input(Tensor value);
  /// Leaf bound to a ParamStore entry; repeated calls with the same name return the same Var.
  Var param(const ParamStore& store, const std::string& name);

  const Tensor& value(Var v) const;
  /// Gradient accumulated into `v` by the last backward(); zeros if none reached it.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Seeds d(loss)/d(loss) = 1 for a single-element `loss` and propagates.
  void backward(Var loss);
  /// Adds gradients of every param leaf into the store's accumulators.
  void accumulate_param_grads(ParamStore& store) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// With gradients disabled, inputs and params are recorded as constants and no backward
  /// closures are kept. Used for inference.
  void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }

  // Math ops.
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);
  Var linear(Var x, Var w, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double s);
  Var hadamard(Var a, Var b);
  Var add_constant(Var a, const Tensor& c);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var exp(Var x);
  Var softmax_rows(Var m, std::vector<char> mask = {});
  Var layer_norm(Var x, Var gain, Var bias);
  Var pairwise_abs_diff(Var tracks, Var dets, std::optional<std::size_t> wrap_column);
  Var distance_bias(Var refs, const Tensor& positions, double tau);
  Var points_affine(Var points, const Tensor& rotation, const Tensor& translation);
  Var focal_loss_logits(Var logits, std::vector<int> targets, double alpha, double gamma, double weight);
  Var cross_entropy_rows(Var logits, const Tensor& targets);
  Var box_l1(Var pred, const Tensor& target, double weight);
  /// Sum of single-element vars.
  Var sum(const std::vector<Var>& scalars);

  // Structural ops.
  Var reshape(Var a, std::vector<std::size_t> shape);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_rows(Var a, std::size_t begin, std::size_t end);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  Var gather_rows(Var a, const std::vector<std::size_t>& rows);
  /// Repeats a single row vector n times.
  Var repeat_rows(Var row, std::size_t n);

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::function<void(const Tensor&)> backward;
    std::string param_name;
  };

  Var push(Tensor value, bool requires_grad, std::function<void(const Tensor&)> backward = {});
  bool any_requires(std::initializer_list<Var> vs) const;
  void accumulate(Var v, const Tensor& g);
  void accumulate(Var v, std::span<const double> g);
  Tensor grad_tensor(Var v) const;

  std::vector<Node> nodes_;
  std::unordered_map<std::string, Var> params_;
  bool grad_enabled_ = true;
};

}  // namespace alttrack
