#pragma once

// Straight-through Gumbel-Softmax over per-event binary choices.

#include "ehd/autodiff.hpp"
#include "ehd/rng.hpp"

namespace ehd::ad {

// logits: n x 2 class log-scores (rows are events, column 1 = distill).
// Forward value is exactly one-hot per row: argmax of the Gumbel-perturbed
// logits. The gradient flows through the tempered softmax of the perturbed
// logits (temperature tau > 0) as the straight-through proxy.
Value gumbel_softmax_st(const Value& logits, double tau, Rng& rng);

}  // namespace ehd::ad
