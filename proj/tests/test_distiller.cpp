#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "ehd/distiller.hpp"
#include "ehd/gradcheck.hpp"

using namespace ehd;
namespace ad = ehd::ad;

namespace {

FullyNnModel small_mtpp(std::uint64_t seed = 5) {
  FullyNnConfig cfg;
  cfg.mark_count = 3;
  cfg.history_dim = 8;
  cfg.intensity_dim = 8;
  cfg.layers = 2;
  Rng rng = make_rng(seed);
  return FullyNnModel(cfg, &rng);
}

DistillerConfig small_cfg() {
  DistillerConfig cfg;
  cfg.mark_count = 3;
  cfg.input_dim = 8;
  cfg.hidden_dim = 12;
  cfg.qkv_dim = 8;
  cfg.heads = 2;
  cfg.history_depth = 2;
  cfg.future_depth = 2;
  cfg.time_scale = 10.0;
  return cfg;
}

DistillInstance toy_instance() {
  DistillInstance inst;
  inst.seq_id = 7;
  inst.offset = 2;
  inst.history = {{0, 1.0}, {1, 3.0}, {2, 6.0}, {0, 6.5}};
  inst.future = {{1, 7.0}, {0, 8.0}};
  return inst;
}

// one-hot mask from a distill bit per event
ad::Value hard_mask(const std::vector<int>& distill_bits) {
  ad::Mat m(static_cast<Eigen::Index>(distill_bits.size()), 2);
  for (size_t i = 0; i < distill_bits.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = distill_bits[i] ? 0.0 : 1.0;
    m(static_cast<Eigen::Index>(i), 1) = distill_bits[i] ? 1.0 : 0.0;
  }
  return ad::constant(m);
}

}  // namespace

TEST_CASE("zero selection head gives every event log(1/2) on both classes") {
  auto cfg = small_cfg();
  Rng rng = make_rng(2);
  DistillerModel model(cfg, &rng);
  model.params().get("head.w2")->val.setZero();
  model.params().get("head.b2")->val.setZero();
  auto lp = model.selection_log_probs(toy_instance());
  REQUIRE(lp->rows() == 4);
  for (Eigen::Index i = 0; i < 4; ++i)
    for (int c = 0; c < 2; ++c)
      CHECK(lp->val(i, c) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("selection rows are normalized distributions") {
  Rng rng = make_rng(4);
  DistillerModel model(small_cfg(), &rng);
  auto lp = model.selection_log_probs(toy_instance());
  for (Eigen::Index i = 0; i < lp->rows(); ++i) {
    double p = std::exp(lp->val(i, 0)) + std::exp(lp->val(i, 1));
    CHECK(p == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("all-keep mask rebuilds the full history bit-exactly") {
  auto mtpp = small_mtpp();
  auto inst = toy_instance();
  auto rb = rebuild_history(mtpp, inst, hard_mask({0, 0, 0, 0}));
  CHECK(rb.kept_count == 4);
  CHECK_FALSE(rb.all_distilled);
  auto direct = mtpp.make_history(inst.history, inst.t0());
  CHECK(rb.graph.embs->val == direct.embs->val);
  CHECK(rb.graph.intervals->val == direct.intervals->val);
  CHECK(rb.graph.t_last->val == direct.t_last->val);
  // and the downstream score is bit-identical too
  auto a = mtpp.graph_log_perplexity(rb.graph, inst.future, inst.t0());
  auto b = mtpp.graph_log_perplexity(direct, inst.future, inst.t0());
  CHECK(a->scalar() == b->scalar());
}

TEST_CASE("partial mask re-differences the kept intervals") {
  auto mtpp = small_mtpp();
  auto inst = toy_instance();  // relative times 0, 2, 5, 5.5
  auto rb = rebuild_history(mtpp, inst, hard_mask({1, 0, 0, 1}));
  REQUIRE(rb.kept_count == 2);
  REQUIRE(rb.kept_events.size() == 2);
  CHECK(rb.kept_events[0].time == 3.0);
  CHECK(rb.kept_events[1].time == 6.0);
  CHECK(rb.graph.intervals->val(0, 0) == 2.0);  // from the window start
  CHECK(rb.graph.intervals->val(1, 0) == 3.0);
  CHECK(rb.graph.t_last->val(0, 0) == 5.0);
  // and the rebuilt score equals scoring the kept events directly
  auto direct = mtpp.make_history(rb.kept_events, inst.t0());
  auto a = mtpp.graph_log_perplexity(rb.graph, inst.future, inst.t0());
  auto b = mtpp.graph_log_perplexity(direct, inst.future, inst.t0());
  CHECK(a->scalar() == b->scalar());
}

TEST_CASE("all-distill mask conditions on the empty history") {
  auto mtpp = small_mtpp();
  auto inst = toy_instance();
  auto rb = rebuild_history(mtpp, inst, hard_mask({1, 1, 1, 1}));
  CHECK(rb.all_distilled);
  CHECK(rb.graph.count == 0);
  auto lp = mtpp.graph_log_perplexity(rb.graph, inst.future, inst.t0());
  CHECK(std::isfinite(lp->scalar()));
  double plain = log_perplexity(mtpp, inst.future, {}, inst.t0());
  CHECK(lp->scalar() == plain);
}

TEST_CASE("cardinality loss is the distilled fraction (L0 == L1 on one-hot)") {
  std::vector<int> bits(12, 0);
  bits[1] = bits[5] = bits[9] = 1;
  auto l = loss_cardinality({hard_mask(bits)});
  CHECK(l->scalar() == doctest::Approx(3.0 / 12.0).epsilon(1e-12));
  // averaged across samples
  auto l2 = loss_cardinality({hard_mask(bits), hard_mask(std::vector<int>(12, 1))});
  CHECK(l2->scalar() == doctest::Approx((0.25 + 1.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("constraint loss plugs in as max(dppl - log eps, 0)") {
  auto mtpp = small_mtpp();
  auto inst = toy_instance();
  // keeping everything makes dppl exactly zero, so with eps = 0.5 the hinge
  // sits at -log(0.5) ~ 0.6931
  auto lpf_direct = log_perplexity(mtpp, inst.future, inst.history, inst.t0());
  std::vector<double> dppls;
  auto lc = loss_constraint(mtpp, inst, {hard_mask({0, 0, 0, 0})}, 0.5,
                            lpf_direct, &dppls);
  REQUIRE(dppls.size() == 1);
  CHECK(dppls[0] == 0.0);
  CHECK(lc->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // with a huge eps the hinge is inactive and the loss is exactly zero
  auto lc2 =
      loss_constraint(mtpp, inst, {hard_mask({0, 0, 0, 0})}, 100.0, lpf_direct);
  CHECK(lc2->scalar() == 0.0);
}

TEST_CASE("gradients reach the selection head through sampled masks") {
  Rng rng = make_rng(9);
  DistillerModel model(small_cfg(), &rng);
  auto mtpp = small_mtpp();
  auto inst = toy_instance();
  model.params().zero_grad();
  mtpp.params().zero_grad();
  Rng srng = make_rng(10);
  auto lp = model.selection_log_probs(inst);
  std::vector<ad::Value> masks;
  for (int s = 0; s < 4; ++s)
    masks.push_back(ad::gumbel_softmax_st(lp, 1.0, srng));
  double lpf = log_perplexity(mtpp, inst.future, inst.history, inst.t0());
  auto loss = ad::add(loss_constraint(mtpp, inst, masks, 0.5, lpf),
                      loss_cardinality(masks));
  ad::backward(loss);
  double head_norm = model.params().get("head.w2")->grad.norm();
  double emb_norm = model.params().get("tok.emb")->grad.norm();
  double enc_norm = model.params().get("hist.l0.wq")->grad.norm();
  CHECK(head_norm > 0.0);
  CHECK(emb_norm > 0.0);
  CHECK(enc_norm > 0.0);
}

TEST_CASE("encoder and head gradients pass finite differences") {
  Rng rng = make_rng(13);
  DistillerModel model(small_cfg(), &rng);
  auto inst = toy_instance();
  ad::Mat w = ad::Mat::Random(4, 2);
  std::vector<ad::Value> probes{
      model.params().get("head.w1"), model.params().get("hist.l0.wq"),
      model.params().get("fut.l1.w2"), model.params().get("tok.emb"),
      model.params().get("hist.in.w")};
  double err = ad::grad_check(
      [&](const std::vector<ad::Value>&) {
        return ad::sum_all(
            ad::mul(model.selection_log_probs(inst), ad::constant(w)));
      },
      probes);
  CHECK(err < 1e-4);
}

TEST_CASE("distill is deterministic and self-consistent") {
  Rng rng = make_rng(15);
  DistillerModel model(small_cfg(), &rng);
  auto mtpp = small_mtpp();
  auto inst = toy_instance();
  auto a = distill(model, mtpp, inst);
  auto b = distill(model, mtpp, inst);
  CHECK(a.y == b.y);
  CHECK(a.dppl_l == b.dppl_l);
  CHECK(a.h_d.size() + a.h_l.size() == inst.history.size());
  CHECK(a.card_d == static_cast<std::int64_t>(a.h_d.size()));
  CHECK(a.metric == a.dppl_d - a.dppl_l);
  // the partition recomputes to the same scores through the plain interface
  CHECK(a.dppl_l ==
        dppl(mtpp, a.h_l, inst.history, inst.future, inst.t0()));
  auto js = distill_result_to_json(a);
  CHECK(js.find("\"seq_id\":7") != std::string::npos);
  CHECK(js.find("dppl_l") != std::string::npos);
}

TEST_CASE("checkpoint roundtrip reproduces the selection bit-exactly") {
  Rng rng = make_rng(21);
  DistillerModel model(small_cfg(), &rng);
  const char* path = "/tmp/ehd_test_distiller.ckpt";
  save_checkpoint(path, model.to_checkpoint());
  auto loaded = DistillerModel::from_checkpoint(load_checkpoint(path));
  std::remove(path);
  auto inst = toy_instance();
  auto a = model.selection_log_probs(inst);
  auto b = loaded.selection_log_probs(inst);
  CHECK(a->val == b->val);
}

TEST_CASE("a short training run moves the left fraction") {
  // the cardinality loss is the distilled fraction, so minimizing it alone
  // must drive the model towards keeping everything (left fraction -> 1)
  std::vector<DistillInstance> data;
  Rng rng = make_rng(33);
  for (int i = 0; i < 16; ++i) {
    DistillInstance inst;
    inst.seq_id = i;
    double t = 0.0;
    for (int j = 0; j < 5; ++j) {
      t += 0.2 + rng.uniform();
      inst.history.push_back({static_cast<int>(rng.below(3)), t});
    }
    for (int j = 0; j < 3; ++j) {
      t += 0.2 + rng.uniform();
      inst.future.push_back({static_cast<int>(rng.below(3)), t});
    }
    data.push_back(std::move(inst));
  }
  auto mtpp = small_mtpp(55);
  auto cfg = small_cfg();
  DistillerTrainConfig tc;
  tc.steps = 40;
  tc.warmup_steps = 5;
  tc.batch_size = 4;
  tc.lr = 0.01;
  tc.n_samples = 2;
  tc.log_every = 10;
  tc.mode = LossMode::kCardinalityOnly;
  tc.check_masks = true;
  auto res = train_distiller(data, mtpp, cfg, tc);
  CHECK_FALSE(res.diverged);
  REQUIRE(res.left_fraction_trace.size() >= 2);
  CHECK(res.left_fraction_trace.back() > res.left_fraction_trace.front());
  CHECK(res.left_fraction_trace.back() > 0.9);
  auto model = DistillerModel::from_checkpoint(res.checkpoint);
  auto r = distill(model, mtpp, data[0]);
  CHECK(r.card_d >= 0);
}
