#include "ehd/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace ehd {

namespace ad_ = ehd::ad;
using ad_::Value;

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

// Sinusoidal encoding of scaled absolute time; frequencies span four decades
// so both coarse position in the window and fine inter-event structure get a
// distinct phase.
ad_::Mat time_encoding(const std::vector<Event>& events, double t0,
                       double time_scale, int dim) {
  const Eigen::Index n = static_cast<Eigen::Index>(events.size());
  ad_::Mat pe(n, dim);
  const int half = dim / 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    double ts = (events[static_cast<size_t>(i)].time - t0) / time_scale;
    for (int j = 0; j < half; ++j) {
      double freq = std::pow(10000.0, static_cast<double>(j) / half);
      pe(i, 2 * j) = std::sin(ts * freq);
      pe(i, 2 * j + 1) = std::cos(ts * freq);
    }
    if (dim % 2 == 1) pe(i, dim - 1) = ts;
  }
  return pe;
}

}  // namespace

DistillerModel::DistillerModel(DistillerConfig cfg, Rng* init_rng)
    : cfg_(cfg) {
  const int K = cfg_.mark_count;
  const int D = cfg_.input_dim;
  const int H = cfg_.hidden_dim;
  const int Q = cfg_.qkv_dim;
  if (K < 1 || D < 2 || H < 1 || Q < 1 || cfg_.heads < 1 ||
      cfg_.history_depth < 1 || cfg_.future_depth < 1)
    throw std::invalid_argument("DistillerModel: bad configuration");
  if (Q % cfg_.heads != 0)
    throw std::invalid_argument(
        "DistillerModel: qkv_dim must divide evenly across heads");
  if (cfg_.time_scale <= 0.0 || cfg_.tau <= 0.0)
    throw std::invalid_argument("DistillerModel: scales must be positive");

  Rng fallback = make_rng(0xD1, 0);
  Rng& rng = init_rng ? *init_rng : fallback;
  auto g = [&](Eigen::Index r, Eigen::Index c) {
    return gaussian(r, c, 1.0 / std::sqrt(static_cast<double>(r)), rng);
  };

  params_.add("tok.emb", gaussian(K, D, 0.3, rng));
  for (const char* stack : {"hist", "fut"}) {
    const int depth =
        stack[0] == 'h' ? cfg_.history_depth : cfg_.future_depth;
    std::string s(stack);
    params_.add(s + ".in.w", g(D, H));
    params_.add(s + ".in.b", ad_::Mat::Zero(1, H));
    for (int l = 0; l < depth; ++l) {
      std::string p = s + ".l" + std::to_string(l) + ".";
      params_.add(p + "wq", g(H, Q));
      params_.add(p + "wk", g(H, Q));
      params_.add(p + "wv", g(H, Q));
      params_.add(p + "wo", g(Q, H));
      params_.add(p + "bo", ad_::Mat::Zero(1, H));
      params_.add(p + "w1", g(H, H));
      params_.add(p + "b1", ad_::Mat::Zero(1, H));
      params_.add(p + "w2", g(H, H));
      params_.add(p + "b2", ad_::Mat::Zero(1, H));
    }
  }
  params_.add("head.w1", g(2 * H, H));
  params_.add("head.b1", ad_::Mat::Zero(1, H));
  // small selection head keeps the initial keep/distill split near uniform
  params_.add("head.w2", gaussian(H, 2, 0.01, rng));
  params_.add("head.b2", ad_::Mat::Zero(1, 2));
}

Value DistillerModel::encode_tokens(const std::vector<Event>& events,
                                    double t0, const std::string& prefix,
                                    int depth) const {
  if (events.empty())
    throw std::invalid_argument("encode_tokens: empty token sequence");
  if (static_cast<int>(events.size()) > cfg_.max_seq_len)
    throw std::invalid_argument("encode_tokens: sequence exceeds max_seq_len");
  const int heads = cfg_.heads;
  const Eigen::Index dh = cfg_.qkv_dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<Eigen::Index> idx;
  idx.reserve(events.size());
  for (const auto& e : events) {
    if (e.mark < 0 || e.mark >= cfg_.mark_count)
      throw std::invalid_argument("encode_tokens: mark out of range");
    idx.push_back(e.mark);
  }
  Value x = ad_::add(
      ad_::gather_rows(params_.get("tok.emb"), idx),
      ad_::constant(time_encoding(events, t0, cfg_.time_scale, cfg_.input_dim)));
  x = ad_::add_rowvec(ad_::matmul(x, params_.get(prefix + ".in.w")),
                      params_.get(prefix + ".in.b"));

  for (int l = 0; l < depth; ++l) {
    std::string p = prefix + ".l" + std::to_string(l) + ".";
    Value q = ad_::matmul(x, params_.get(p + "wq"));
    Value k = ad_::matmul(x, params_.get(p + "wk"));
    Value v = ad_::matmul(x, params_.get(p + "wv"));
    Value heads_out;
    for (int h = 0; h < heads; ++h) {
      Value qh = ad_::slice_cols(q, h * dh, dh);
      Value kh = ad_::slice_cols(k, h * dh, dh);
      Value vh = ad_::slice_cols(v, h * dh, dh);
      Value scores =
          ad_::mul_scalar(ad_::matmul(qh, ad_::transpose(kh)), inv_sqrt_dh);
      Value oh = ad_::matmul(ad_::softmax_rows(scores), vh);
      heads_out = h == 0 ? oh : ad_::concat_cols(heads_out, oh);
    }
    Value attn = ad_::add_rowvec(
        ad_::matmul(heads_out, params_.get(p + "wo")), params_.get(p + "bo"));
    x = ad_::layer_norm_rows(ad_::add(x, attn));
    Value ff = ad_::add_rowvec(
        ad_::matmul(ad_::tanh(ad_::add_rowvec(
                        ad_::matmul(x, params_.get(p + "w1")),
                        params_.get(p + "b1"))),
                    params_.get(p + "w2")),
        params_.get(p + "b2"));
    x = ad_::layer_norm_rows(ad_::add(x, ff));
  }
  return x;
}

Value DistillerModel::encode_history(const DistillInstance& inst) const {
  return encode_tokens(inst.history, inst.t0(), "hist", cfg_.history_depth);
}

Value DistillerModel::encode_future(const DistillInstance& inst) const {
  return encode_tokens(inst.future, inst.t0(), "fut", cfg_.future_depth);
}

Value DistillerModel::selection_log_probs(const DistillInstance& inst) const {
  Value hist = encode_history(inst);
  Value fut_pooled = ad_::mean_rows(encode_future(inst));  // 1 x hidden
  // broadcast pooled future over every history token
  Value ones = ad_::constant(ad_::Mat::Ones(hist->rows(), 1));
  Value joint = ad_::concat_cols(hist, ad_::matmul(ones, fut_pooled));
  Value h1 = ad_::tanh(ad_::add_rowvec(
      ad_::matmul(joint, params_.get("head.w1")), params_.get("head.b1")));
  Value logits = ad_::add_rowvec(ad_::matmul(h1, params_.get("head.w2")),
                                 params_.get("head.b2"));
  return ad_::log_softmax_rows(logits);
}

Checkpoint DistillerModel::to_checkpoint() const {
  std::map<std::string, std::string> cfg;
  cfg["model"] = "distiller";
  cfg["mark_count"] = std::to_string(cfg_.mark_count);
  cfg["input_dim"] = std::to_string(cfg_.input_dim);
  cfg["hidden_dim"] = std::to_string(cfg_.hidden_dim);
  cfg["qkv_dim"] = std::to_string(cfg_.qkv_dim);
  cfg["heads"] = std::to_string(cfg_.heads);
  cfg["history_depth"] = std::to_string(cfg_.history_depth);
  cfg["future_depth"] = std::to_string(cfg_.future_depth);
  cfg["max_seq_len"] = std::to_string(cfg_.max_seq_len);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", cfg_.time_scale);
  cfg["time_scale"] = buf;
  std::snprintf(buf, sizeof(buf), "%.17g", cfg_.tau);
  cfg["tau"] = buf;
  return snapshot_store(params_, std::move(cfg));
}

DistillerModel DistillerModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.config.at("model") != "distiller")
    throw std::runtime_error("checkpoint is not a distiller model");
  DistillerConfig cfg;
  cfg.mark_count = std::stoi(ckpt.config.at("mark_count"));
  cfg.input_dim = std::stoi(ckpt.config.at("input_dim"));
  cfg.hidden_dim = std::stoi(ckpt.config.at("hidden_dim"));
  cfg.qkv_dim = std::stoi(ckpt.config.at("qkv_dim"));
  cfg.heads = std::stoi(ckpt.config.at("heads"));
  cfg.history_depth = std::stoi(ckpt.config.at("history_depth"));
  cfg.future_depth = std::stoi(ckpt.config.at("future_depth"));
  cfg.max_seq_len = std::stoi(ckpt.config.at("max_seq_len"));
  cfg.time_scale = std::stod(ckpt.config.at("time_scale"));
  cfg.tau = std::stod(ckpt.config.at("tau"));
  DistillerModel model(cfg);
  load_into_store(ckpt, model.params());
  return model;
}

// ---- rebuilder and losses ----------------------------------------------------

RebuiltHistory rebuild_history(const FullyNnModel& mtpp,
                               const DistillInstance& inst,
                               const Value& mask) {
  const Eigen::Index n = static_cast<Eigen::Index>(inst.history.size());
  if (mask->rows() != n || mask->cols() != 2)
    throw std::invalid_argument("rebuild_history: mask shape mismatch");
  const double t0 = inst.t0();

  Value keep = ad_::slice_cols(mask, 0, 1);  // n x 1
  ad_::Mat rel(n, 1);
  std::vector<Eigen::Index> marks;
  marks.reserve(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    rel(i, 0) = inst.history[static_cast<size_t>(i)].time - t0;
    marks.push_back(inst.history[static_cast<size_t>(i)].mark);
  }
  // gradient attachment: times and embeddings carry the keep component, so
  // the hard selection below stays differentiable through the proxy
  Value times = ad_::mul(ad_::constant(std::move(rel)), keep);
  Value embs =
      ad_::mul_colvec(ad_::gather_rows(mtpp.params().get("emb"), marks), keep);

  RebuiltHistory out;
  std::vector<Eigen::Index> kept;
  // threshold instead of exact equality so slightly-soft masks (used by the
  // finite-difference surrogate of the sampler) select the same rows
  for (Eigen::Index i = 0; i < n; ++i) {
    if (mask->val(i, 1) < 0.5) {
      kept.push_back(i);
      out.kept_events.push_back(inst.history[static_cast<size_t>(i)]);
    }
  }
  out.kept_count = static_cast<Eigen::Index>(kept.size());
  out.all_distilled = kept.empty();
  if (kept.empty()) {
    out.graph.embs = ad_::constant(
        ad_::Mat::Zero(0, mtpp.config().history_dim));
    out.graph.intervals = ad_::constant(ad_::Mat::Zero(0, 1));
    out.graph.t_last = ad_::constant(0.0);
    out.graph.count = 0;
    return out;
  }
  Value kept_times = ad_::gather_rows(times, kept);
  out.graph.embs = ad_::gather_rows(embs, kept);
  // re-difference against the window start so intervals stay consistent
  out.graph.intervals = ad_::diff_rows_prepend_zero(kept_times);
  out.graph.t_last = ad_::slice_rows(kept_times, out.kept_count - 1, 1);
  out.graph.count = out.kept_count;
  return out;
}

Value loss_constraint(const FullyNnModel& mtpp, const DistillInstance& inst,
                      const std::vector<Value>& masks, double eps,
                      double log_ppl_full, std::vector<double>* dppl_out) {
  if (masks.empty()) throw std::invalid_argument("loss_constraint: no masks");
  if (eps <= 0.0) throw std::invalid_argument("loss_constraint: eps <= 0");
  const double log_eps = std::log(eps);
  Value sum = ad_::constant(0.0);
  for (const auto& mask : masks) {
    RebuiltHistory rb = rebuild_history(mtpp, inst, mask);
    Value lp_l =
        mtpp.graph_log_perplexity(rb.graph, inst.future, inst.t0());
    Value d = ad_::sub(ad_::constant(log_ppl_full), lp_l);
    if (dppl_out) dppl_out->push_back(d->scalar());
    sum = ad_::add(sum, ad_::relu(ad_::add_scalar(d, -log_eps)));
  }
  return ad_::mul_scalar(sum, 1.0 / static_cast<double>(masks.size()));
}

Value loss_cardinality(const std::vector<Value>& masks) {
  if (masks.empty()) throw std::invalid_argument("loss_cardinality: no masks");
  Value sum = ad_::constant(0.0);
  for (const auto& mask : masks)
    sum = ad_::add(sum, ad_::mean_all(ad_::slice_cols(mask, 1, 1)));
  return ad_::mul_scalar(sum, 1.0 / static_cast<double>(masks.size()));
}

// ---- training ------------------------------------------------------------------

namespace {

void check_mask_invariants(const Value& mask) {
  double l1 = 0.0;
  long l0 = 0;
  for (Eigen::Index i = 0; i < mask->rows(); ++i) {
    double a = mask->val(i, 0), b = mask->val(i, 1);
    if ((a != 0.0 && a != 1.0) || (b != 0.0 && b != 1.0) || a + b != 1.0)
      throw std::logic_error("sampled mask row is not one-hot");
    l1 += b;
    if (b != 0.0) ++l0;
  }
  if (l1 != static_cast<double>(l0))
    throw std::logic_error("mask L1 differs from L0");
}

}  // namespace

DistillerTrainResult train_distiller(const std::vector<DistillInstance>& data,
                                     const FullyNnModel& mtpp,
                                     const DistillerConfig& model_cfg,
                                     const DistillerTrainConfig& train_cfg) {
  if (data.empty())
    throw std::invalid_argument("train_distiller: empty dataset");
  Rng init_rng = make_rng(train_cfg.seed, 0xD157);
  DistillerModel model(model_cfg, &init_rng);
  Adam opt(model.params(),
           {.lr = train_cfg.lr, .warmup_steps = train_cfg.warmup_steps});
  Rng batch_rng = make_rng(train_cfg.seed, 0xBA7C);
  Rng sample_rng = make_rng(train_cfg.seed, 0x5A3E);

  DistillerTrainResult res;
  res.checkpoint = model.to_checkpoint();
  double win_loss = 0.0, win_left = 0.0, win_dppl = 0.0;
  long win_n = 0, win_samples = 0;
  for (long step = 0; step < train_cfg.steps; ++step) {
    model.params().zero_grad();
    mtpp.params().zero_grad();  // scratch buffers; the scorer is frozen
    Value loss = ad_::constant(0.0);
    for (int b = 0; b < train_cfg.batch_size; ++b) {
      const auto& inst = data[batch_rng.below(data.size())];
      Value log_probs = model.selection_log_probs(inst);
      std::vector<Value> masks;
      masks.reserve(static_cast<size_t>(train_cfg.n_samples));
      for (int s = 0; s < train_cfg.n_samples; ++s) {
        masks.push_back(
            ad_::gumbel_softmax_st(log_probs, model_cfg.tau, sample_rng));
        if (train_cfg.check_masks) check_mask_invariants(masks.back());
        double kept = 0.0;
        for (Eigen::Index i = 0; i < masks.back()->rows(); ++i)
          kept += masks.back()->val(i, 0);
        win_left += kept / static_cast<double>(masks.back()->rows());
        ++win_samples;
      }
      Value contrib;
      if (train_cfg.mode == LossMode::kCardinalityOnly) {
        contrib = ad_::mul_scalar(loss_cardinality(masks), train_cfg.alpha);
      } else {
        double lpf =
            log_perplexity(mtpp, inst.future, inst.history, inst.t0());
        std::vector<double> dppls;
        Value l_c =
            loss_constraint(mtpp, inst, masks, train_cfg.eps, lpf, &dppls);
        for (double d : dppls) win_dppl += d / dppls.size();
        contrib = train_cfg.mode == LossMode::kConstraintOnly
                      ? l_c
                      : ad_::add(ad_::mul_scalar(loss_cardinality(masks),
                                                 train_cfg.alpha),
                                 l_c);
      }
      loss = ad_::add(loss, contrib);
    }
    loss = ad_::mul_scalar(loss, 1.0 / train_cfg.batch_size);
    double lv = loss->scalar();
    if (!std::isfinite(lv)) {
      std::fprintf(stderr,
                   "[distiller] divergence at step %ld; keeping last-good\n",
                   step);
      res.diverged = true;
      return res;
    }
    ad_::backward(loss);
    if (!opt.step()) {
      res.diverged = true;
      return res;
    }
    win_loss += lv;
    ++win_n;
    if ((step + 1) % train_cfg.log_every == 0 ||
        step + 1 == train_cfg.steps) {
      res.loss_trace.push_back(win_loss / win_n);
      res.left_fraction_trace.push_back(win_left / win_samples);
      res.mean_dppl_l_trace.push_back(win_n > 0 ? win_dppl / win_n : 0.0);
      win_loss = win_left = win_dppl = 0.0;
      win_n = win_samples = 0;
      res.checkpoint = model.to_checkpoint();
    }
  }
  res.checkpoint = model.to_checkpoint();
  return res;
}

// ---- inference -------------------------------------------------------------------

DistillResult distill(const DistillerModel& model, const FullyNnModel& mtpp,
                      const DistillInstance& inst) {
  Value log_probs = model.selection_log_probs(inst);
  DistillResult r;
  r.seq_id = inst.seq_id;
  r.offset = inst.offset;
  const size_t n = inst.history.size();
  r.y.resize(n);
  for (size_t i = 0; i < n; ++i) {
    auto idx = static_cast<Eigen::Index>(i);
    // ties resolve to keep
    r.y[i] = log_probs->val(idx, 1) > log_probs->val(idx, 0) ? 1 : 0;
    (r.y[i] ? r.h_d : r.h_l).push_back(inst.history[i]);
  }
  r.card_d = static_cast<std::int64_t>(r.h_d.size());
  const double t0 = inst.t0();
  r.dppl_d = dppl(mtpp, r.h_d, inst.history, inst.future, t0);
  r.dppl_l = dppl(mtpp, r.h_l, inst.history, inst.future, t0);
  r.metric = r.dppl_d - r.dppl_l;
  return r;
}

std::string distill_result_to_json(const DistillResult& r) {
  nlohmann::json j;
  j["seq_id"] = r.seq_id;
  j["offset"] = r.offset;
  j["y"] = r.y;
  j["card_d"] = r.card_d;
  j["dppl_d"] = r.dppl_d;
  j["dppl_l"] = r.dppl_l;
  j["metric"] = r.metric;
  return j.dump();
}

}  // namespace ehd
