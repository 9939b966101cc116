#pragma once

#include <cstddef>
#include <functional>

#include "gnnr/autodiff.hpp"

namespace gnnr {

/// Builds a scalar loss on `tape` from a leaf holding the evaluation point.
using ScalarFunction = std::function<Var(Tape& tape, const Var& input)>;

struct GradCheckReport {
  Tensor analytic;
  Tensor numeric;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = false;
};

/// Compares reverse-mode gradients of `f` at `point` with central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h, coordinate by coordinate.
///
/// Relative error per coordinate is |a - n| / max(|a|, |n|, floor) where floor
/// guards coordinates whose true gradient is ~0; passed means every coordinate
/// is within `tol` in relative terms (or in absolute terms below the floor).
GradCheckReport grad_check(const ScalarFunction& f, const Tensor& point, double h, double tol,
                           double floor = 1e-6);

}  // namespace gnnr
