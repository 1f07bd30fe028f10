#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "rac/diff/param_set.hpp"
#include "rac/diff/tensor.hpp"

namespace rac::diff {

struct GradcheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor),
  // so gradients below the floor are compared on an absolute scale.
  double denominator_floor = 1e-3;
};

struct GradcheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool passed = false;
};

// Compares backward() gradients of the scalar f against central differences
// (f(x + eps) - f(x - eps)) / (2 eps) for every element of every parameter.
// Runs in high precision. Throws std::runtime_error if f is not deterministic.
GradcheckReport gradcheck(const std::function<Tensor()>& f, ParamSet params, const GradcheckOptions& options = {});

}  // namespace rac::diff
