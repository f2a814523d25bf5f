#pragma once

// Multivariate exponential-kernel Hawkes simulation (Ogata thinning) with
// planted-cause labels, plus the exact likelihood of the generating model
// for closed-form checks.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "ehd/data.hpp"
#include "ehd/mtpp.hpp"
#include "ehd/rng.hpp"

namespace ehd {

struct SyntheticSpec {
  Eigen::VectorXd base_rates;       // mu_k, per mark
  Eigen::MatrixXd excitation;      // alpha(m -> k) kernel amplitudes
  Eigen::VectorXd decay;           // beta_k per target mark
  std::vector<int> cause_marks;    // planted-cause mark set
  double horizon = 100.0;          // sequences live on [0, horizon]
  std::uint64_t seed = 0;

  // branching matrix B(m,k) = alpha(m,k) / beta(k); spectral radius < 1
  Eigen::MatrixXd branching_matrix() const;
  double branching_radius() const;
  void validate() const;

  int mark_count() const { return static_cast<int>(base_rates.size()); }
};

// Simulates `count` sequences. Throws on runaway cascades (more than 10x the
// stationary expected count).
std::vector<EventSequence> synth_hawkes(const SyntheticSpec& spec,
                                        std::int64_t count);

// Exact conditional intensity of the generating model at time t given the
// (strictly earlier) events of `history`.
Eigen::VectorXd hawkes_intensity(const SyntheticSpec& spec,
                                 const std::vector<Event>& history, double t);

// Exact per-event log densities of `events` under the generating model, each
// conditioned on `prefix` plus the preceding entries of `events`. The
// interval integral for event i runs from the previous event (or t0) to t_i.
std::vector<double> hawkes_log_densities(const SyntheticSpec& spec,
                                         const std::vector<Event>& prefix,
                                         const std::vector<Event>& events,
                                         double t0);

// Mean of -log density over events: the exact log-perplexity of the
// generating model.
double hawkes_log_perplexity(const SyntheticSpec& spec,
                             const std::vector<Event>& prefix,
                             const std::vector<Event>& events, double t0);

// The generating model behind the shared scoring interface, so the exact
// likelihood can stand in wherever a trained model is accepted.
class HawkesScorer : public MtppScorer {
 public:
  explicit HawkesScorer(SyntheticSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
  }

  std::vector<double> log_densities(const std::vector<Event>& prefix,
                                    const std::vector<Event>& events,
                                    double t0) const override {
    return hawkes_log_densities(spec_, prefix, events, t0);
  }
  double log_likelihood(const EventSequence& seq) const override;

  const SyntheticSpec& spec() const { return spec_; }

 private:
  SyntheticSpec spec_;
};

}  // namespace ehd
