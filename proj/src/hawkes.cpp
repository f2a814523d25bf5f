#include "ehd/hawkes.hpp"

#include <cmath>
#include <stdexcept>

namespace ehd {

Eigen::MatrixXd SyntheticSpec::branching_matrix() const {
  Eigen::MatrixXd b = excitation;
  for (Eigen::Index k = 0; k < b.cols(); ++k) b.col(k) /= decay(k);
  return b;
}

double SyntheticSpec::branching_radius() const {
  return branching_matrix().eigenvalues().cwiseAbs().maxCoeff();
}

void SyntheticSpec::validate() const {
  const int k = mark_count();
  if (excitation.rows() != k || excitation.cols() != k ||
      decay.size() != k)
    throw std::invalid_argument("SyntheticSpec: inconsistent dimensions");
  if ((base_rates.array() < 0).any() || (excitation.array() < 0).any() ||
      (decay.array() <= 0).any())
    throw std::invalid_argument("SyntheticSpec: negative rates");
  if (branching_radius() >= 1.0)
    throw std::invalid_argument(
        "SyntheticSpec: branching spectral radius >= 1 (non-stationary)");
}

std::vector<EventSequence> synth_hawkes(const SyntheticSpec& spec,
                                        std::int64_t count) {
  spec.validate();
  const int K = spec.mark_count();

  // stationary mean rate: (I - B^T)^{-1} mu
  Eigen::MatrixXd bt = spec.branching_matrix().transpose();
  Eigen::VectorXd stat_rate =
      (Eigen::MatrixXd::Identity(K, K) - bt).lu().solve(spec.base_rates);
  const double expected = stat_rate.sum() * spec.horizon;
  const auto hard_cap = static_cast<std::int64_t>(10.0 * expected + 100.0);

  std::vector<EventSequence> out;
  out.reserve(count);
  std::vector<int> is_cause(K, 0);
  for (int m : spec.cause_marks) is_cause.at(m) = 1;

  for (std::int64_t s = 0; s < count; ++s) {
    Rng rng = make_rng(spec.seed, static_cast<std::uint64_t>(s) + 1);
    EventSequence seq;
    seq.seq_id = s;
    seq.t0 = 0.0;
    seq.T = spec.horizon;

    // per-mark decaying excitation state: lambda_k(t) = mu_k + state_k
    Eigen::VectorXd state = Eigen::VectorXd::Zero(K);
    double t = 0.0;
    while (true) {
      // intensity is non-increasing between events, so the left-limit total
      // is a valid thinning bound
      double bound = (spec.base_rates + state).sum();
      double dt = rng.exponential(bound);
      double tc = t + dt;
      if (tc > spec.horizon) break;
      Eigen::VectorXd decayed =
          state.array() * (-spec.decay.array() * dt).exp();
      Eigen::VectorXd lam = spec.base_rates + decayed;
      double total = lam.sum();
      if (rng.uniform() <= total / bound) {
        // accept; pick mark proportional to intensity
        double u = rng.uniform() * total;
        int mark = K - 1;
        double acc = 0.0;
        for (int k = 0; k < K; ++k) {
          acc += lam(k);
          if (u <= acc) {
            mark = k;
            break;
          }
        }
        seq.events.push_back({mark, tc});
        seq.cause.push_back(static_cast<std::uint8_t>(is_cause[mark]));
        decayed += spec.excitation.row(mark).transpose();
        if (static_cast<std::int64_t>(seq.events.size()) > hard_cap) {
          throw std::runtime_error(
              "synth_hawkes: runaway cascade (branching radius " +
              std::to_string(spec.branching_radius()) + ")");
        }
      }
      state = decayed;
      t = tc;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

Eigen::VectorXd hawkes_intensity(const SyntheticSpec& spec,
                                 const std::vector<Event>& history, double t) {
  Eigen::VectorXd lam = spec.base_rates;
  for (const auto& e : history) {
    if (e.time >= t) break;
    lam += (spec.excitation.row(e.mark).transpose().array() *
            (-spec.decay.array() * (t - e.time)).exp())
               .matrix();
  }
  return lam;
}

std::vector<double> hawkes_log_densities(const SyntheticSpec& spec,
                                         const std::vector<Event>& prefix,
                                         const std::vector<Event>& events,
                                         double t0) {
  std::vector<Event> all = prefix;
  std::vector<double> out;
  out.reserve(events.size());
  double t_prev = prefix.empty() ? t0 : std::max(t0, prefix.back().time);
  for (const auto& e : events) {
    // integral of each mark's intensity over (t_prev, e.time]
    double integral =
        spec.base_rates.sum() * (e.time - t_prev);
    for (const auto& h : all) {
      if (h.time >= e.time) break;
      double a = std::max(t_prev, h.time);
      Eigen::ArrayXd ex = spec.excitation.row(h.mark).transpose().array() /
                          spec.decay.array() *
                          ((-spec.decay.array() * (a - h.time)).exp() -
                           (-spec.decay.array() * (e.time - h.time)).exp());
      integral += ex.sum();
    }
    double lam = hawkes_intensity(spec, all, e.time)(e.mark);
    out.push_back(std::log(lam) - integral);
    all.push_back(e);
    t_prev = e.time;
  }
  return out;
}

double HawkesScorer::log_likelihood(const EventSequence& seq) const {
  if (seq.events.empty())
    throw std::invalid_argument("log_likelihood: empty sequence");
  auto ld = hawkes_log_densities(spec_, {}, seq.events, seq.t0);
  double sum = 0.0;
  for (double d : ld) sum += d;
  // trailing no-event interval (t_n, T]
  double t_last = seq.events.back().time;
  double tail = spec_.base_rates.sum() * (seq.T - t_last);
  for (const auto& e : seq.events) {
    Eigen::ArrayXd ex = spec_.excitation.row(e.mark).transpose().array() /
                        spec_.decay.array() *
                        ((-spec_.decay.array() * (t_last - e.time)).exp() -
                         (-spec_.decay.array() * (seq.T - e.time)).exp());
    tail += ex.sum();
  }
  return sum - tail;
}

double hawkes_log_perplexity(const SyntheticSpec& spec,
                             const std::vector<Event>& prefix,
                             const std::vector<Event>& events, double t0) {
  if (events.empty())
    throw std::invalid_argument("hawkes_log_perplexity: empty target");
  auto ld = hawkes_log_densities(spec, prefix, events, t0);
  double sum = 0.0;
  for (double d : ld) sum += d;
  return -sum / static_cast<double>(ld.size());
}

}  // namespace ehd
