#pragma once

// Search baselines over the same keep/remove masks the distiller emits:
// random sampling and greedy selection, each in two modes (find the count
// that meets given dppl targets, or report dppl at a given count), plus a
// brute-force enumeration oracle for small instances.

#include <cstdint>
#include <vector>

#include "ehd/data.hpp"
#include "ehd/mtpp.hpp"
#include "ehd/rng.hpp"

namespace ehd {

// Reference scores from a prior distill call on the same instance. A
// target-mode baseline must beat both: dppl_d above, dppl_l below.
struct TargetPair {
  double dppl_d_target = 0.0;
  double dppl_l_target = 0.0;
};

// One increment per (dppl_d, dppl_l) evaluation pair.
struct EvalCounter {
  std::int64_t evals = 0;
  double wall_seconds = 0.0;

  void merge(const EvalCounter& other) {
    evals += other.evals;
    wall_seconds += other.wall_seconds;
  }
};

struct BaselineCountResult {
  std::int64_t count = 0;  // card(H_d) at stop
  bool capped = false;     // targets unreachable; count == card(H_f)
  double dppl_d = 0.0;     // (mean) values at the stopping count
  double dppl_l = 0.0;
  std::vector<std::uint8_t> y;  // representative mask (greedy: the actual one)
};

struct BaselinePairResult {
  double dppl_d = 0.0;
  double dppl_l = 0.0;
  std::vector<std::uint8_t> y;
  bool empty_hd = false;  // l_d == 0 boundary: dppl_d conditions on nothing
};

// Random count search: starting from count 0 (where both dppl values are
// degenerately 0), grow the removal count by one; at each count average both
// dppl values over M uniformly drawn masks with exactly that many ones; stop
// once mean dppl_d exceeds the target and mean dppl_l falls below it. Caps at
// card(H_f) with the flag set. Exactly M counter increments per count tried.
BaselineCountResult rd_given_target(const MtppScorer& model,
                                    const DistillInstance& inst,
                                    const TargetPair& targets, int M, Rng& rng,
                                    EvalCounter* counter = nullptr);

// Greedy count search: repeatedly remove the single event minimizing the
// resulting dppl_l (ties to the lowest event index) until both targets hold.
// Step i evaluates card(H_f) - i candidates, one counter increment each.
BaselineCountResult gs_given_target(const MtppScorer& model,
                                    const DistillInstance& inst,
                                    const TargetPair& targets,
                                    EvalCounter* counter = nullptr);

// Mean (dppl_d, dppl_l) over M uniform masks with exactly l_d ones; exactly
// M counter increments. l_d == 0 returns (dppl conditioned on the empty set,
// 0) with empty_hd set.
BaselinePairResult rd_given_length(const MtppScorer& model,
                                   const DistillInstance& inst,
                                   std::int64_t l_d, int M, Rng& rng,
                                   EvalCounter* counter = nullptr);

// Greedy loop run for exactly l_d steps; returns the final pair. l_d == 0 is
// the same boundary as rd_given_length (one counter increment).
BaselinePairResult gs_given_length(const MtppScorer& model,
                                   const DistillInstance& inst,
                                   std::int64_t l_d,
                                   EvalCounter* counter = nullptr);

struct OracleResult {
  bool feasible = false;
  std::vector<std::uint8_t> y;
  std::int64_t card = 0;
  double dppl_l = 0.0;
};

// Enumerates removal masks by ascending cardinality, within a cardinality in
// ascending lexicographic order of the mask bits, and returns the first one
// whose dppl(H_l, H_f, x_o) < log(eps). Rejects card(H_f) > n_max.
OracleResult exhaustive_oracle(const MtppScorer& model,
                               const DistillInstance& inst, double eps,
                               int n_max = 20, EvalCounter* counter = nullptr);

}  // namespace ehd
