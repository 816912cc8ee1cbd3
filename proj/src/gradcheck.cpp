#include "alttrack/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace alttrack {
namespace {

void check_step(double h) {
  if (!(h >= 1e-7 && h <= 1e-3)) throw ContractError("grad_check: step must lie in [1e-7, 1e-3]");
}

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.input(t));
  return tape.value(f(tape, vars)).item();
}

Tensor with_entry(const Tensor& t, std::size_t k, double delta) {
  std::vector<double> d(t.data().begin(), t.data().end());
  d[k] += delta;
  return Tensor(t.shape(), std::move(d));
}

void record(GradCheckResult& r, double analytic, double numeric, const std::string& where) {
  const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
  if (!std::isfinite(err)) {
    r.finite = false;
    r.location = where;
    return;
  }
  if (err > r.max_rel_error) {
    r.max_rel_error = err;
    r.location = where;
  }
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h) {
  check_step(h);
  GradCheckResult result;
  std::vector<Tensor> analytic;
  try {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.input(t));
    const Var out = f(tape, vars);
    tape.backward(out);
    for (auto v : vars) analytic.push_back(tape.grad(v));
  } catch (const NonFiniteError& e) {
    return {0.0, false, std::string("forward/backward: ") + e.what()};
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t k = 0; k < inputs[i].size(); ++k) {
      const std::string where = "input " + std::to_string(i) + " [" + std::to_string(k) + "]";
      try {
        auto plus = inputs, minus = inputs;
        plus[i] = with_entry(inputs[i], k, h);
        minus[i] = with_entry(inputs[i], k, -h);
        const double numeric = (evaluate(f, plus) - evaluate(f, minus)) / (2.0 * h);
        record(result, analytic[i][k], numeric, where);
      } catch (const NonFiniteError&) {
        result.finite = false;
        result.location = where;
      }
      if (!result.finite) return result;
    }
  }
  return result;
}

GradCheckResult grad_check_params(const ParamScalarFn& f, const ParamStore& store,
                                  const std::vector<std::pair<std::string, std::size_t>>& entries, double h) {
  check_step(h);
  GradCheckResult result;
  ParamStore grads = store;
  grads.zero_grad();
  try {
    Tape tape;
    const Var out = f(tape, store);
    tape.backward(out);
    tape.accumulate_param_grads(grads);
  } catch (const NonFiniteError& e) {
    return {0.0, false, std::string("forward/backward: ") + e.what()};
  }
  auto eval_at = [&](const std::string& name, std::size_t k, double delta) {
    ParamStore shifted = store;
    shifted.set(name, with_entry(store.value(name), k, delta));
    Tape tape;
    return tape.value(f(tape, shifted)).item();
  };
  for (const auto& [name, k] : entries) {
    const std::string where = name + " [" + std::to_string(k) + "]";
    try {
      const double numeric = (eval_at(name, k, h) - eval_at(name, k, -h)) / (2.0 * h);
      record(result, grads.grad(name)[k], numeric, where);
    } catch (const NonFiniteError&) {
      result.finite = false;
      result.location = where;
    }
    if (!result.finite) return result;
  }
  return result;
}

Var random_projection(Tape& tape, Var y, std::uint64_t seed) {
  const auto n = tape.value(y).size();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = dist(rng);
  const Var flat = tape.reshape(y, {1, n});
  return tape.reshape(tape.matmul(flat, tape.constant(Tensor({n, 1}, std::move(w)))), {1});
}

}  // namespace alttrack
