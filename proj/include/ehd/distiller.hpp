#pragma once

// The distillation model: dual self-attention encoders over the observed
// history and the observed future, a per-event keep/distill head, a
// straight-through mask sampler, and a history rebuilder that keeps the
// selection differentiable end to end against a frozen likelihood model.

#include <cstdint>
#include <string>
#include <vector>

#include "ehd/checkpoint.hpp"
#include "ehd/data.hpp"
#include "ehd/mtpp.hpp"
#include "ehd/optimizer.hpp"
#include "ehd/rng.hpp"
#include "ehd/sampling.hpp"

namespace ehd {

struct DistillerConfig {
  int mark_count = 0;
  int input_dim = 32;
  int hidden_dim = 64;
  int qkv_dim = 32;  // total across heads
  int heads = 4;
  int history_depth = 4;
  int future_depth = 4;
  int max_seq_len = 512;
  double time_scale = 1.0;  // absolute-time scale for the sinusoidal encoding
  double tau = 1.0;         // ST-GS gradient-proxy temperature
};

// Gradient-carrying counterfactual history built from a sampled mask.
struct RebuiltHistory {
  GraphHistory graph;              // inputs for the frozen likelihood model
  std::vector<Event> kept_events;  // hard selection, original order
  Eigen::Index kept_count = 0;
  bool all_distilled = false;
};

// H_d / H_l partition with both conditioning scores for one instance.
struct DistillResult {
  std::int64_t seq_id = 0;
  std::int64_t offset = 0;
  std::vector<std::uint8_t> y;  // 1 = distilled
  std::vector<Event> h_d;
  std::vector<Event> h_l;
  std::int64_t card_d = 0;
  double dppl_d = 0.0;
  double dppl_l = 0.0;
  double metric = 0.0;  // dppl_d - dppl_l
};

class DistillerModel {
 public:
  explicit DistillerModel(DistillerConfig cfg, Rng* init_rng = nullptr);

  const DistillerConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Per-token representations from the two encoder stacks.
  ad::Value encode_history(const DistillInstance& inst) const;
  ad::Value encode_future(const DistillInstance& inst) const;

  // Per-event keep/distill log-probabilities (card(H_f) x 2, column 1 =
  // distill). Rows exponentiate and sum to 1.
  ad::Value selection_log_probs(const DistillInstance& inst) const;

  Checkpoint to_checkpoint() const;
  static DistillerModel from_checkpoint(const Checkpoint& ckpt);

 private:
  ad::Value encode_tokens(const std::vector<Event>& events, double t0,
                          const std::string& prefix, int depth) const;

  DistillerConfig cfg_;
  ParamStore params_;
};

// Gradient attachment: the keep component of `mask` (column 0) scales the
// kept events' times and embeddings before hard selection, and intervals are
// re-differenced from the window start, so gradients reach the mask.
// `mask` is card(H_f) x 2; a row is kept when its distill component (column
// 1) is below 0.5, so exactly one-hot masks and their soft surrogates select
// the same rows.
RebuiltHistory rebuild_history(const FullyNnModel& mtpp,
                               const DistillInstance& inst,
                               const ad::Value& mask);

// Hinge-relaxed constraint loss, averaged over N sampled masks:
// (1/N) sum_i max(dppl(H_{i,l}, H_f, x_o) - log eps, 0).
// If dppl_out is non-null, the per-sample dppl(H_l, H_f, x_o) values are
// appended.
ad::Value loss_constraint(const FullyNnModel& mtpp,
                          const DistillInstance& inst,
                          const std::vector<ad::Value>& masks, double eps,
                          double log_ppl_full,
                          std::vector<double>* dppl_out = nullptr);

// Mean distilled fraction over samples: L1(y)/card(y), identical to L0 on
// one-hot masks.
ad::Value loss_cardinality(const std::vector<ad::Value>& masks);

enum class LossMode { kFull, kConstraintOnly, kCardinalityOnly };

struct DistillerTrainConfig {
  long steps = 2000;
  long warmup_steps = 100;
  int batch_size = 32;
  double lr = 0.001;
  double alpha = 1.0;
  double eps = 0.5;
  int n_samples = 4;
  LossMode mode = LossMode::kFull;
  long log_every = 50;
  std::uint64_t seed = 1;
  bool check_masks = false;  // verify one-hot / L0 == L1 on every batch
};

struct DistillerTrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_trace;
  // card(H_l)/card(H_f), averaged over batch and samples, per log interval
  std::vector<double> left_fraction_trace;
  std::vector<double> mean_dppl_l_trace;  // per-step mean sampled dppl(H_l,.)
  bool diverged = false;
};

DistillerTrainResult train_distiller(const std::vector<DistillInstance>& data,
                                     const FullyNnModel& mtpp,
                                     const DistillerConfig& model_cfg,
                                     const DistillerTrainConfig& train_cfg);

// Algorithm: y = per-event argmax of the selection distribution (no
// sampling); H_d = {y_i = 1}, H_l = complement; scores from the frozen model.
DistillResult distill(const DistillerModel& model, const FullyNnModel& mtpp,
                      const DistillInstance& inst);

std::string distill_result_to_json(const DistillResult& r);

}  // namespace ehd
