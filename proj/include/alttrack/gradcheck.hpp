#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "alttrack/autodiff.hpp"

namespace alttrack {

struct GradCheckResult {
  double max_rel_error = 0.0;
  bool finite = true;
  /// Where the worst error (or the non-finite value) was found, e.g. "input 1 [7]".
  std::string location;

  bool passed(double tolerance) const { return finite && max_rel_error < tolerance; }
};

/// Builds a scalar from freshly recorded inputs. Must be pure in its inputs.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

/// Compares tape gradients of `f` against central differences over every input entry.
/// Error per entry is |analytic - numeric| / max(1, |analytic|). Requires h in [1e-7, 1e-3].
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5);

/// Same comparison for selected entries of a ParamStore; `f` reads parameters via Tape::param.
using ParamScalarFn = std::function<Var(Tape&, const ParamStore&)>;
GradCheckResult grad_check_params(const ParamScalarFn& f, const ParamStore& store,
                                  const std::vector<std::pair<std::string, std::size_t>>& entries, double h = 1e-5);

/// Reduces any tensor-valued var to a scalar with fixed pseudo-random weights so every output
/// entry contributes to the checked gradient.
Var random_projection(Tape& tape, Var y, std::uint64_t seed = 7);

}  // namespace alttrack
