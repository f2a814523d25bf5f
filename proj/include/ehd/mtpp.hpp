#pragma once

// Likelihood models over marked event sequences.
//
// The neural model parameterizes the per-mark compensator directly (a
// feed-forward stack that is monotone in elapsed time by construction) and
// reads intensities off its derivative, so interval integrals need no
// quadrature. A recurrent encoder over (mark embedding, log-scaled interval)
// summarizes the conditioning prefix.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ehd/autodiff.hpp"
#include "ehd/checkpoint.hpp"
#include "ehd/data.hpp"
#include "ehd/optimizer.hpp"
#include "ehd/rng.hpp"

namespace ehd {

// Read-only scoring interface shared by the neural model and the closed-form
// test models. Safe for concurrent callers on a frozen model.
class MtppScorer {
 public:
  virtual ~MtppScorer() = default;

  // Per-event log densities of `events`, each conditioned on `prefix` plus
  // the preceding entries of `events`. The first inter-event interval is
  // measured from t0. `prefix` may be empty.
  virtual std::vector<double> log_densities(const std::vector<Event>& prefix,
                                            const std::vector<Event>& events,
                                            double t0) const = 0;

  // Full-sequence log-likelihood on [seq.t0, seq.T], including the trailing
  // no-event interval.
  virtual double log_likelihood(const EventSequence& seq) const = 0;
};

// -(1/card(x_o)) sum_i log p(x_i | x_{<i}, H). H may be empty; every event of
// H must precede every event of x_o.
double log_perplexity(const MtppScorer& model, const std::vector<Event>& x_o,
                      const std::vector<Event>& H, double t0);

// log ppl(x_o | H_f) - log ppl(x_o | H_l); H_l must be an order-preserving
// subsequence of H_f.
double dppl(const MtppScorer& model, const std::vector<Event>& H_l,
            const std::vector<Event>& H_f, const std::vector<Event>& x_o,
            double t0);

bool is_subsequence(const std::vector<Event>& sub,
                    const std::vector<Event>& full);

// ---- homogeneous Poisson test model -----------------------------------------

class PoissonModel : public MtppScorer {
 public:
  explicit PoissonModel(Eigen::VectorXd rates) : rates_(std::move(rates)) {}

  // closed-form MLE fit: rate_k = count_k / total observed time
  static PoissonModel fit(const std::vector<EventSequence>& data,
                          int mark_count);

  std::vector<double> log_densities(const std::vector<Event>& prefix,
                                    const std::vector<Event>& events,
                                    double t0) const override;
  double log_likelihood(const EventSequence& seq) const override;

  const Eigen::VectorXd& rates() const { return rates_; }

 private:
  Eigen::VectorXd rates_;
};

// ---- neural compensator model ------------------------------------------------

struct FullyNnConfig {
  int mark_count = 0;
  int history_dim = 32;    // mark embedding width == encoder state width
  int intensity_dim = 16;  // compensator trunk width
  int layers = 2;          // compensator trunk depth
  double interval_scale = 1.0;
};

// Gradient-carrying conditioning prefix: what the history rebuilder emits.
// Times are relative to the window origin t0.
struct GraphHistory {
  ad::Value embs;       // n x history_dim (n == 0 means empty history)
  ad::Value intervals;  // n x 1
  ad::Value t_last;     // 1x1, time of the last event relative to t0
  Eigen::Index count = 0;
};

class FullyNnModel : public MtppScorer {
 public:
  explicit FullyNnModel(FullyNnConfig cfg, Rng* init_rng = nullptr);

  const FullyNnConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Constant-leaf prefix for plain scoring.
  GraphHistory make_history(const std::vector<Event>& events, double t0) const;

  // Sum over `future` of graph-mode per-event log densities given `prefix`.
  // If per_event is non-null the individual values are appended.
  ad::Value graph_log_density_sum(const GraphHistory& prefix,
                                  const std::vector<Event>& future, double t0,
                                  std::vector<double>* per_event = nullptr) const;

  // -(1/card(future)) * graph_log_density_sum
  ad::Value graph_log_perplexity(const GraphHistory& prefix,
                                 const std::vector<Event>& future,
                                 double t0) const;

  // Per-mark cumulative intensity over an elapsed interval dt >= 0 from the
  // encoder state; graph-mode. Lambda(0) == 0 by construction.
  ad::Value graph_compensator(const ad::Value& state, const ad::Value& dt) const;
  // Per-mark instantaneous intensity at elapsed dt (derivative of the
  // compensator along dt, taken analytically).
  ad::Value graph_intensity(const ad::Value& state, const ad::Value& dt) const;

  // Encoder state after consuming the prefix (learned initial state if empty).
  ad::Value graph_encode(const GraphHistory& prefix) const;

  std::vector<double> log_densities(const std::vector<Event>& prefix,
                                    const std::vector<Event>& events,
                                    double t0) const override;
  double log_likelihood(const EventSequence& seq) const override;

  // 1x1 graph-mode negative log-likelihood of a full sequence (the training
  // loss), normalized per event.
  ad::Value graph_nll(const EventSequence& seq) const;

  Checkpoint to_checkpoint() const;
  static FullyNnModel from_checkpoint(const Checkpoint& ckpt);

 private:
  ad::Value encode_step(const ad::Value& state, const ad::Value& emb_row,
                        const ad::Value& dt) const;

  FullyNnConfig cfg_;
  ParamStore params_;
};

struct MtppTrainConfig {
  long steps = 2000;
  long warmup_steps = 100;
  int batch_size = 16;
  double lr = 0.002;
  long log_every = 100;
  std::uint64_t seed = 1;
};

struct MtppTrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_trace;  // mean per-event NLL per log interval
  bool diverged = false;           // checkpoint is last-good if true
  double final_nll = 0.0;
};

MtppTrainResult train_mtpp(const std::vector<EventSequence>& data,
                           const FullyNnConfig& model_cfg,
                           const MtppTrainConfig& train_cfg);

}  // namespace ehd
