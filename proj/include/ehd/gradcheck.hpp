#pragma once

// Central finite-difference verification of backward rules.

#include <functional>
#include <vector>

#include "ehd/autodiff.hpp"

namespace ehd::ad {

// f builds a fresh 1x1 graph from the given leaves each call (any random
// sources must be frozen by the caller). Returns the max over all input
// coordinates of |analytic - central fd| / max(|analytic|, |fd|, 1e-8).
double grad_check(const std::function<Value(const std::vector<Value>&)>& f,
                  std::vector<Value> inputs, double step = 1e-4);

}  // namespace ehd::ad
