#include "doctest.h"

#include <cmath>
#include <limits>

#include "ehd/autodiff.hpp"
#include "ehd/optimizer.hpp"

using namespace ehd;
using namespace ehd::ad;

TEST_CASE("zero gradient leaves parameters untouched") {
  ParamStore store;
  auto p = store.add("p", Mat::Constant(2, 2, 1.5));
  Adam opt(store, {.lr = 0.1});
  store.zero_grad();
  CHECK(opt.step());
  CHECK(p->val.isApprox(Mat::Constant(2, 2, 1.5), 0.0));
}

TEST_CASE("linear warmup: step 1 of 2000 at lr 0.001 uses 0.001/2000") {
  ParamStore store;
  auto p = store.add("p", Mat::Constant(1, 1, 0.0));
  Adam opt(store, {.lr = 0.001, .warmup_steps = 2000});
  CHECK(opt.effective_lr() == 0.001 / 2000);  // rate the first step will use
  p->grad(0, 0) = 1.0;
  CHECK(opt.step());
  // Adam normalizes a constant gradient to a unit step, so the first update
  // has magnitude ~ lr/2000
  CHECK(std::abs(p->val(0, 0)) == doctest::Approx(0.001 / 2000).epsilon(1e-3));
}

TEST_CASE("effective lr ramps linearly then holds") {
  ParamStore store;
  auto p = store.add("p", Mat::Constant(1, 1, 0.0));
  Adam opt(store, {.lr = 0.01, .warmup_steps = 10});
  double prev = 0.0;
  for (int i = 0; i < 10; ++i) {
    p->grad(0, 0) = 1.0;
    CHECK(opt.step());
    double cur = opt.effective_lr();
    CHECK(cur >= prev);
    prev = cur;
  }
  p->grad(0, 0) = 1.0;
  opt.step();
  CHECK(opt.effective_lr() == doctest::Approx(0.01));
}

TEST_CASE("ten steps on a quadratic strictly decrease the loss") {
  ParamStore store;
  auto x = store.add("x", Mat::Constant(1, 2, 5.0));
  Adam opt(store, {.lr = 0.2});
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 10; ++i) {
    store.zero_grad();
    auto loss = sum_all(mul(x, x));
    backward(loss);
    CHECK(loss->scalar() < prev);
    prev = loss->scalar();
    CHECK(opt.step());
  }
}

TEST_CASE("non-finite gradient aborts the step and keeps parameters") {
  ParamStore store;
  auto p = store.add("p", Mat::Constant(1, 1, 2.0));
  Adam opt(store, {.lr = 0.1});
  p->grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(opt.step());
  CHECK(p->val(0, 0) == 2.0);
  // a later clean step still works
  store.zero_grad();
  p->grad(0, 0) = 1.0;
  CHECK(opt.step());
  CHECK(p->val(0, 0) != 2.0);
}

TEST_CASE("duplicate parameter names are rejected") {
  ParamStore store;
  store.add("p", Mat::Zero(1, 1));
  CHECK_THROWS_AS(store.add("p", Mat::Zero(1, 1)), std::invalid_argument);
  CHECK_THROWS_AS(store.get("missing"), std::out_of_range);
}
