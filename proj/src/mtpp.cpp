#include "ehd/mtpp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace ehd {

namespace ad_ = ehd::ad;
using ad_::Value;

// ---- scoring functionals -----------------------------------------------------

double log_perplexity(const MtppScorer& model, const std::vector<Event>& x_o,
                      const std::vector<Event>& H, double t0) {
  if (x_o.empty()) throw std::invalid_argument("log_perplexity: empty x_o");
  if (!H.empty() && H.back().time >= x_o.front().time)
    throw std::invalid_argument(
        "log_perplexity: history must precede the target window");
  auto ld = model.log_densities(H, x_o, t0);
  double sum = 0.0;
  for (double d : ld) sum += d;
  return -sum / static_cast<double>(ld.size());
}

bool is_subsequence(const std::vector<Event>& sub,
                    const std::vector<Event>& full) {
  size_t j = 0;
  for (const auto& e : full) {
    if (j < sub.size() && sub[j].mark == e.mark && sub[j].time == e.time) ++j;
  }
  return j == sub.size();
}

double dppl(const MtppScorer& model, const std::vector<Event>& H_l,
            const std::vector<Event>& H_f, const std::vector<Event>& x_o,
            double t0) {
  if (!is_subsequence(H_l, H_f))
    throw std::invalid_argument("dppl: H_l is not a subsequence of H_f");
  return log_perplexity(model, x_o, H_f, t0) -
         log_perplexity(model, x_o, H_l, t0);
}

// ---- Poisson test model --------------------------------------------------------

PoissonModel PoissonModel::fit(const std::vector<EventSequence>& data,
                               int mark_count) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(mark_count);
  double total_time = 0.0;
  for (const auto& s : data) {
    total_time += s.T - s.t0;
    for (const auto& e : s.events) counts(e.mark) += 1.0;
  }
  // tiny floor keeps unseen marks finite
  return PoissonModel(((counts.array() + 1e-9) / total_time).matrix());
}

std::vector<double> PoissonModel::log_densities(
    const std::vector<Event>& prefix, const std::vector<Event>& events,
    double t0) const {
  const double total = rates_.sum();
  std::vector<double> out;
  out.reserve(events.size());
  double t_prev = prefix.empty() ? t0 : prefix.back().time;
  for (const auto& e : events) {
    out.push_back(std::log(rates_(e.mark)) - total * (e.time - t_prev));
    t_prev = e.time;
  }
  return out;
}

double PoissonModel::log_likelihood(const EventSequence& seq) const {
  auto ld = log_densities({}, seq.events, seq.t0);
  double sum = std::accumulate(ld.begin(), ld.end(), 0.0);
  double t_last = seq.events.empty() ? seq.t0 : seq.events.back().time;
  return sum - rates_.sum() * (seq.T - t_last);
}

// ---- neural model ----------------------------------------------------------------

namespace {

ad_::Mat gaussian(Eigen::Index r, Eigen::Index c, double scale, Rng& rng) {
  ad_::Mat m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      double u1 = rng.uniform(), u2 = rng.uniform();
      m(i, j) = scale * std::sqrt(-2.0 * std::log(u1)) *
                std::cos(2.0 * M_PI * u2);
    }
  return m;
}

}  // namespace

FullyNnModel::FullyNnModel(FullyNnConfig cfg, Rng* init_rng) : cfg_(cfg) {
  const int K = cfg_.mark_count;
  const int H = cfg_.history_dim;
  const int W = cfg_.intensity_dim;
  if (K < 1 || H < 1 || W < 1 || cfg_.layers < 1)
    throw std::invalid_argument("FullyNnModel: bad configuration");
  Rng fallback = make_rng(0x11, 0);
  Rng& rng = init_rng ? *init_rng : fallback;

  auto g = [&](Eigen::Index r, Eigen::Index c, double s) {
    return gaussian(r, c, s, rng);
  };
  params_.add("emb", g(K, H, 0.3));
  params_.add("rnn.w_e", g(H, H, 1.0 / std::sqrt(double(H))));
  params_.add("rnn.w_t", g(H, 1, 0.3));
  params_.add("rnn.w_h", g(H, H, 1.0 / std::sqrt(double(H))));
  params_.add("rnn.b", ad_::Mat::Zero(H, 1));
  params_.add("rnn.h0", g(H, 1, 0.1));
  params_.add("comp.a_raw", g(W, 1, 0.3).array() - 0.5);
  params_.add("comp.u", g(W, H, 1.0 / std::sqrt(double(H))));
  params_.add("comp.b0", ad_::Mat::Zero(W, 1));
  for (int l = 1; l < cfg_.layers; ++l) {
    params_.add("comp.w" + std::to_string(l) + "_raw",
                g(W, W, 0.3).array() - 1.0);
    params_.add("comp.c" + std::to_string(l), ad_::Mat::Zero(W, 1));
  }
  params_.add("comp.v_raw", g(K, W, 0.3).array() - 1.0);
  params_.add("comp.d", ad_::Mat::Zero(K, 1));
}

Value FullyNnModel::encode_step(const Value& state, const Value& emb_row,
                                const Value& dt) const {
  // phi(dt) = log1p(dt / scale)
  Value phi = ad_::log(
      ad_::add_scalar(ad_::mul_scalar(dt, 1.0 / cfg_.interval_scale), 1.0));
  Value pre = ad_::add(
      ad_::add(ad_::matmul(params_.get("rnn.w_e"), emb_row),
               ad_::matmul(params_.get("rnn.w_t"), phi)),
      ad_::add(ad_::matmul(params_.get("rnn.w_h"), state),
               params_.get("rnn.b")));
  return ad_::tanh(pre);
}

GraphHistory FullyNnModel::make_history(const std::vector<Event>& events,
                                        double t0) const {
  GraphHistory h;
  h.count = static_cast<Eigen::Index>(events.size());
  if (events.empty()) {
    h.embs = ad_::constant(ad_::Mat::Zero(0, cfg_.history_dim));
    h.intervals = ad_::constant(ad_::Mat::Zero(0, 1));
    h.t_last = ad_::constant(0.0);
    return h;
  }
  std::vector<Eigen::Index> idx;
  ad_::Mat intervals(h.count, 1);
  double prev = 0.0;
  for (Eigen::Index i = 0; i < h.count; ++i) {
    const auto& e = events[static_cast<size_t>(i)];
    idx.push_back(e.mark);
    double rel = e.time - t0;
    intervals(i, 0) = rel - prev;
    prev = rel;
  }
  h.embs = ad_::gather_rows(params_.get("emb"), idx);
  h.intervals = ad_::constant(std::move(intervals));
  ad_::Mat last(1, 1);
  last(0, 0) = events.back().time - t0;
  h.t_last = ad_::constant(std::move(last));
  return h;
}

Value FullyNnModel::graph_encode(const GraphHistory& prefix) const {
  Value state = params_.get("rnn.h0");
  for (Eigen::Index i = 0; i < prefix.count; ++i) {
    Value emb = ad_::transpose(ad_::slice_rows(prefix.embs, i, 1));
    Value dt = ad_::slice_rows(prefix.intervals, i, 1);
    state = encode_step(state, emb, dt);
  }
  return state;
}

namespace {
struct CompPair {
  Value cumulative;  // K x 1
  Value intensity;   // K x 1
};
}  // namespace

// Shared trunk for compensator and intensity: Lambda_k(dt) = out_k(dt) -
// out_k(0) with non-negative dt-path weights and monotone activations;
// lambda is the analytic derivative of the same expression.
static CompPair compensator_pair(const ParamStore& params,
                                 const FullyNnConfig& cfg, const Value& state,
                                 const Value& dt) {
  namespace ad = ehd::ad;
  if (dt->scalar() < 0.0)
    throw std::invalid_argument("compensator: dt must be non-negative");
  const int W = cfg.intensity_dim;
  Value a = ad::softplus(params.get("comp.a_raw"));
  Value dts = ad::mul_scalar(dt, 1.0 / cfg.interval_scale);
  Value hidden = ad::matmul(params.get("comp.u"), state);
  Value ones = ad::constant(ad::Mat::Ones(W, 1));

  Value z = ad::tanh(ad::add(ad::add(ad::matmul(a, dts), hidden),
                             params.get("comp.b0")));
  Value z0 = ad::tanh(ad::add(hidden, params.get("comp.b0")));
  Value dz = ad::mul(ad::sub(ones, ad::mul(z, z)), a);
  for (int l = 1; l < cfg.layers; ++l) {
    Value w = ad::softplus(params.get("comp.w" + std::to_string(l) + "_raw"));
    Value c = params.get("comp.c" + std::to_string(l));
    Value wz = ad::matmul(w, dz);
    z = ad::tanh(ad::add(ad::matmul(w, z), c));
    z0 = ad::tanh(ad::add(ad::matmul(w, z0), c));
    dz = ad::mul(ad::sub(ones, ad::mul(z, z)), wz);
  }
  Value v = ad::softplus(params.get("comp.v_raw"));
  Value pre = ad::add(ad::matmul(v, z), params.get("comp.d"));
  Value pre0 = ad::add(ad::matmul(v, z0), params.get("comp.d"));
  CompPair out;
  out.cumulative = ad::sub(ad::softplus(pre), ad::softplus(pre0));
  out.intensity = ad::mul_scalar(ad::mul(ad::sigmoid(pre), ad::matmul(v, dz)),
                                 1.0 / cfg.interval_scale);
  return out;
}

Value FullyNnModel::graph_compensator(const Value& state,
                                      const Value& dt) const {
  return compensator_pair(params_, cfg_, state, dt).cumulative;
}

Value FullyNnModel::graph_intensity(const Value& state, const Value& dt) const {
  return compensator_pair(params_, cfg_, state, dt).intensity;
}

Value FullyNnModel::graph_log_density_sum(const GraphHistory& prefix,
                                          const std::vector<Event>& future,
                                          double t0,
                                          std::vector<double>* per_event) const {
  if (future.empty())
    throw std::invalid_argument("graph_log_density_sum: empty target");
  Value state = graph_encode(prefix);
  Value t_prev = prefix.t_last;
  Value sum = ad_::constant(0.0);
  bool warned = false;
  for (const auto& e : future) {
    Value dt = ad_::sub(ad_::constant(e.time - t0), t_prev);
    CompPair cp = compensator_pair(params_, cfg_, state, dt);
    Value lam_m = ad_::slice_rows(cp.intensity, e.mark, 1);
    if (lam_m->scalar() <= 0.0 && !warned) {
      std::fprintf(stderr,
                   "[mtpp] zero intensity at observed event (mark %d); "
                   "log density clamped\n",
                   e.mark);
      warned = true;
    }
    Value ld = ad_::sub(ad_::log_clamped(lam_m), ad_::sum_all(cp.cumulative));
    if (per_event) per_event->push_back(ld->scalar());
    sum = ad_::add(sum, ld);
    Value emb = ad_::transpose(
        ad_::slice_rows(params_.get("emb"), e.mark, 1));
    state = encode_step(state, emb, dt);
    t_prev = ad_::constant(e.time - t0);
  }
  return sum;
}

Value FullyNnModel::graph_log_perplexity(const GraphHistory& prefix,
                                         const std::vector<Event>& future,
                                         double t0) const {
  Value sum = graph_log_density_sum(prefix, future, t0);
  return ad_::mul_scalar(sum, -1.0 / static_cast<double>(future.size()));
}

std::vector<double> FullyNnModel::log_densities(
    const std::vector<Event>& prefix, const std::vector<Event>& events,
    double t0) const {
  std::vector<double> out;
  GraphHistory h = make_history(prefix, t0);
  graph_log_density_sum(h, events, t0, &out);
  return out;
}

double FullyNnModel::log_likelihood(const EventSequence& seq) const {
  if (seq.events.empty())
    throw std::invalid_argument("log_likelihood: empty sequence");
  GraphHistory empty = make_history({}, seq.t0);
  Value sum = graph_log_density_sum(empty, seq.events, seq.t0);
  // trailing no-event interval (t_n, T]
  GraphHistory full = make_history(seq.events, seq.t0);
  Value state = graph_encode(full);
  Value tail_dt = ad_::constant(seq.T - seq.events.back().time);
  Value tail = ad_::sum_all(graph_compensator(state, tail_dt));
  return sum->scalar() - tail->scalar();
}

Value FullyNnModel::graph_nll(const EventSequence& seq) const {
  if (seq.events.empty())
    throw std::invalid_argument("graph_nll: empty sequence");
  GraphHistory empty = make_history({}, seq.t0);
  Value sum = graph_log_density_sum(empty, seq.events, seq.t0);
  GraphHistory full = make_history(seq.events, seq.t0);
  Value state = graph_encode(full);
  Value tail_dt = ad_::constant(seq.T - seq.events.back().time);
  Value tail = ad_::sum_all(graph_compensator(state, tail_dt));
  return ad_::mul_scalar(ad_::sub(tail, sum),
                         1.0 / static_cast<double>(seq.events.size()));
}

Checkpoint FullyNnModel::to_checkpoint() const {
  std::map<std::string, std::string> cfg;
  cfg["model"] = "fullynn";
  cfg["mark_count"] = std::to_string(cfg_.mark_count);
  cfg["history_dim"] = std::to_string(cfg_.history_dim);
  cfg["intensity_dim"] = std::to_string(cfg_.intensity_dim);
  cfg["layers"] = std::to_string(cfg_.layers);
  cfg["interval_scale"] = std::to_string(cfg_.interval_scale);
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", cfg_.interval_scale);
    cfg["interval_scale"] = buf;
  }
  return snapshot_store(params_, std::move(cfg));
}

FullyNnModel FullyNnModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.config.at("model") != "fullynn")
    throw std::runtime_error("checkpoint is not a fullynn model");
  FullyNnConfig cfg;
  cfg.mark_count = std::stoi(ckpt.config.at("mark_count"));
  cfg.history_dim = std::stoi(ckpt.config.at("history_dim"));
  cfg.intensity_dim = std::stoi(ckpt.config.at("intensity_dim"));
  cfg.layers = std::stoi(ckpt.config.at("layers"));
  cfg.interval_scale = std::stod(ckpt.config.at("interval_scale"));
  FullyNnModel model(cfg);
  load_into_store(ckpt, model.params());
  return model;
}

MtppTrainResult train_mtpp(const std::vector<EventSequence>& data,
                           const FullyNnConfig& model_cfg,
                           const MtppTrainConfig& train_cfg) {
  if (data.empty()) throw std::invalid_argument("train_mtpp: empty dataset");
  Rng init_rng = make_rng(train_cfg.seed, 0x1417);
  FullyNnModel model(model_cfg, &init_rng);
  Adam opt(model.params(),
           {.lr = train_cfg.lr, .warmup_steps = train_cfg.warmup_steps});
  Rng batch_rng = make_rng(train_cfg.seed, 0xBA7C);

  MtppTrainResult res;
  res.checkpoint = model.to_checkpoint();
  double window_loss = 0.0;
  long window_n = 0;
  for (long step = 0; step < train_cfg.steps; ++step) {
    model.params().zero_grad();
    Value loss = ad_::constant(0.0);
    for (int b = 0; b < train_cfg.batch_size; ++b) {
      const auto& seq = data[batch_rng.below(data.size())];
      loss = ad_::add(loss, model.graph_nll(seq));
    }
    loss = ad_::mul_scalar(loss, 1.0 / train_cfg.batch_size);
    double lv = loss->scalar();
    if (!std::isfinite(lv)) {
      std::fprintf(stderr, "[mtpp] divergence at step %ld; keeping last-good\n",
                   step);
      res.diverged = true;
      return res;
    }
    ad_::backward(loss);
    if (!opt.step()) {
      res.diverged = true;
      return res;
    }
    window_loss += lv;
    ++window_n;
    if ((step + 1) % train_cfg.log_every == 0 || step + 1 == train_cfg.steps) {
      res.loss_trace.push_back(window_loss / window_n);
      res.final_nll = window_loss / window_n;
      window_loss = 0.0;
      window_n = 0;
      res.checkpoint = model.to_checkpoint();
    }
  }
  res.checkpoint = model.to_checkpoint();
  return res;
}

}  // namespace ehd
