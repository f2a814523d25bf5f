#include "ehd/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace ehd {

namespace {

using Clock = std::chrono::steady_clock;

struct Timer {
  EvalCounter* counter;
  Clock::time_point start = Clock::now();
  explicit Timer(EvalCounter* c) : counter(c) {}
  ~Timer() {
    if (counter)
      counter->wall_seconds +=
          std::chrono::duration<double>(Clock::now() - start).count();
  }
};

std::vector<Event> select(const std::vector<Event>& events,
                          const std::vector<std::uint8_t>& y, int bit) {
  std::vector<Event> out;
  for (size_t i = 0; i < events.size(); ++i)
    if (y[i] == bit) out.push_back(events[i]);
  return out;
}

// One counted evaluation pair for a removal mask y (1 = removed into H_d).
// log_ppl_full is precomputed once per instance and shared.
std::pair<double, double> eval_pair(const MtppScorer& model,
                                    const DistillInstance& inst,
                                    const std::vector<std::uint8_t>& y,
                                    double log_ppl_full,
                                    EvalCounter* counter) {
  const double t0 = inst.t0();
  auto h_d = select(inst.history, y, 1);
  auto h_l = select(inst.history, y, 0);
  double lp_d = log_perplexity(model, inst.future, h_d, t0);
  double lp_l = log_perplexity(model, inst.future, h_l, t0);
  if (counter) ++counter->evals;
  return {log_ppl_full - lp_d, log_ppl_full - lp_l};
}

std::vector<std::uint8_t> random_mask(size_t n, std::int64_t ones, Rng& rng) {
  std::vector<std::uint8_t> y(n, 0);
  // Fisher-Yates prefix over the index set
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::int64_t i = 0; i < ones; ++i) {
    size_t j = static_cast<size_t>(i) + rng.below(n - static_cast<size_t>(i));
    std::swap(idx[static_cast<size_t>(i)], idx[j]);
    y[idx[static_cast<size_t>(i)]] = 1;
  }
  return y;
}

bool targets_met(double dd, double dl, const TargetPair& t) {
  // the search continues while dppl_d < target_d or dppl_l > target_l
  return dd > t.dppl_d_target && dl < t.dppl_l_target;
}

}  // namespace

BaselineCountResult rd_given_target(const MtppScorer& model,
                                    const DistillInstance& inst,
                                    const TargetPair& targets, int M, Rng& rng,
                                    EvalCounter* counter) {
  if (M < 1) throw std::invalid_argument("rd_given_target: M must be >= 1");
  Timer timer(counter);
  const auto n = static_cast<std::int64_t>(inst.history.size());
  const double lpf =
      log_perplexity(model, inst.future, inst.history, inst.t0());

  BaselineCountResult res;
  res.y.assign(inst.history.size(), 0);
  double dd = 0.0, dl = 0.0;  // count 0: H_l == H_f, both degenerately zero
  while (!targets_met(dd, dl, targets)) {
    if (res.count == n) {
      res.capped = true;
      break;
    }
    ++res.count;
    double sum_d = 0.0, sum_l = 0.0;
    for (int m = 0; m < M; ++m) {
      auto y = random_mask(inst.history.size(), res.count, rng);
      auto [pd, pl] = eval_pair(model, inst, y, lpf, counter);
      sum_d += pd;
      sum_l += pl;
      res.y = std::move(y);
    }
    dd = sum_d / M;
    dl = sum_l / M;
  }
  res.dppl_d = dd;
  res.dppl_l = dl;
  return res;
}

namespace {

// One greedy step: among events not yet removed, remove the one minimizing
// the resulting dppl_l; ties to the lowest index. Returns the chosen pair.
std::pair<double, double> greedy_step(const MtppScorer& model,
                                      const DistillInstance& inst,
                                      std::vector<std::uint8_t>& y,
                                      double lpf, EvalCounter* counter) {
  double best_d = 0.0, best_l = 0.0;
  std::int64_t best_j = -1;
  for (size_t j = 0; j < y.size(); ++j) {
    if (y[j]) continue;
    y[j] = 1;
    auto [pd, pl] = eval_pair(model, inst, y, lpf, counter);
    y[j] = 0;
    if (best_j < 0 || pl < best_l) {
      best_j = static_cast<std::int64_t>(j);
      best_d = pd;
      best_l = pl;
    }
  }
  y[static_cast<size_t>(best_j)] = 1;
  return {best_d, best_l};
}

}  // namespace

BaselineCountResult gs_given_target(const MtppScorer& model,
                                    const DistillInstance& inst,
                                    const TargetPair& targets,
                                    EvalCounter* counter) {
  Timer timer(counter);
  const auto n = static_cast<std::int64_t>(inst.history.size());
  const double lpf =
      log_perplexity(model, inst.future, inst.history, inst.t0());

  BaselineCountResult res;
  res.y.assign(inst.history.size(), 0);
  double dd = 0.0, dl = 0.0;
  while (!targets_met(dd, dl, targets)) {
    if (res.count == n) {
      res.capped = true;
      break;
    }
    std::tie(dd, dl) = greedy_step(model, inst, res.y, lpf, counter);
    ++res.count;
  }
  res.dppl_d = dd;
  res.dppl_l = dl;
  return res;
}

BaselinePairResult rd_given_length(const MtppScorer& model,
                                   const DistillInstance& inst,
                                   std::int64_t l_d, int M, Rng& rng,
                                   EvalCounter* counter) {
  if (M < 1) throw std::invalid_argument("rd_given_length: M must be >= 1");
  const auto n = static_cast<std::int64_t>(inst.history.size());
  if (l_d < 0 || l_d > n)
    throw std::invalid_argument("rd_given_length: l_d out of range");
  Timer timer(counter);
  const double lpf =
      log_perplexity(model, inst.future, inst.history, inst.t0());
  BaselinePairResult res;
  res.empty_hd = l_d == 0;
  double sum_d = 0.0, sum_l = 0.0;
  for (int m = 0; m < M; ++m) {
    auto y = random_mask(inst.history.size(), l_d, rng);
    auto [pd, pl] = eval_pair(model, inst, y, lpf, counter);
    sum_d += pd;
    sum_l += pl;
    res.y = std::move(y);
  }
  res.dppl_d = sum_d / M;
  res.dppl_l = sum_l / M;
  return res;
}

BaselinePairResult gs_given_length(const MtppScorer& model,
                                   const DistillInstance& inst,
                                   std::int64_t l_d, EvalCounter* counter) {
  const auto n = static_cast<std::int64_t>(inst.history.size());
  if (l_d < 0 || l_d > n)
    throw std::invalid_argument("gs_given_length: l_d out of range");
  Timer timer(counter);
  const double lpf =
      log_perplexity(model, inst.future, inst.history, inst.t0());
  BaselinePairResult res;
  res.y.assign(inst.history.size(), 0);
  if (l_d == 0) {
    res.empty_hd = true;
    std::tie(res.dppl_d, res.dppl_l) =
        eval_pair(model, inst, res.y, lpf, counter);
    return res;
  }
  for (std::int64_t step = 0; step < l_d; ++step)
    std::tie(res.dppl_d, res.dppl_l) =
        greedy_step(model, inst, res.y, lpf, counter);
  return res;
}

namespace {

// Depth-first enumeration of weight-`remaining` masks in ascending
// lexicographic order of the bit string; returns true once feasible.
bool oracle_scan(const MtppScorer& model, const DistillInstance& inst,
                 std::vector<std::uint8_t>& y, size_t pos,
                 std::int64_t remaining, double lpf, double log_eps,
                 EvalCounter* counter, OracleResult& out) {
  const auto n = static_cast<std::int64_t>(y.size());
  if (remaining == 0) {
    auto [pd, pl] = eval_pair(model, inst, y, lpf, counter);
    (void)pd;
    if (pl < log_eps) {
      out.feasible = true;
      out.y = y;
      out.dppl_l = pl;
      return true;
    }
    return false;
  }
  if (n - static_cast<std::int64_t>(pos) < remaining) return false;
  // zero first keeps the enumeration in ascending lexicographic order
  if (oracle_scan(model, inst, y, pos + 1, remaining, lpf, log_eps, counter,
                  out))
    return true;
  y[pos] = 1;
  bool hit = oracle_scan(model, inst, y, pos + 1, remaining - 1, lpf, log_eps,
                         counter, out);
  y[pos] = 0;
  return hit;
}

}  // namespace

OracleResult exhaustive_oracle(const MtppScorer& model,
                               const DistillInstance& inst, double eps,
                               int n_max, EvalCounter* counter) {
  if (eps <= 0.0) throw std::invalid_argument("exhaustive_oracle: eps <= 0");
  const auto n = static_cast<std::int64_t>(inst.history.size());
  if (n > n_max)
    throw std::invalid_argument(
        "exhaustive_oracle: instance exceeds n_max events");
  Timer timer(counter);
  const double lpf =
      log_perplexity(model, inst.future, inst.history, inst.t0());
  const double log_eps = std::log(eps);

  OracleResult res;
  std::vector<std::uint8_t> y(inst.history.size(), 0);
  for (std::int64_t card = 0; card <= n; ++card) {
    if (oracle_scan(model, inst, y, 0, card, lpf, log_eps, counter, res)) {
      res.card = card;
      return res;
    }
  }
  res.feasible = false;
  res.y.assign(inst.history.size(), 0);
  return res;
}

}  // namespace ehd
