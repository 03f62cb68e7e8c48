// Copyright 2026 The amt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include "amt/autograd.hpp"
#include "amt/loss.hpp"
#include "amt/optim.hpp"
#include "helpers.hpp"

using namespace amt;
using amt_test::fill_uniform;

TEST_CASE("tensor shape and indexing") {
  Tensor t({2, 3});
  REQUIRE(t.size() == 6);
  t.at(1, 2) = 5.0;
  REQUIRE(t[5] == 5.0);
  Tensor s = Tensor::scalar(2.5);
  REQUIRE(s.rank() == 0);
  REQUIRE(s.item() == 2.5);
}

TEST_CASE("matmul matches scalar-loop oracle") {
  Rng rng(7);
  Tensor a({3, 4}), b({4, 2});
  fill_uniform(a, rng);
  fill_uniform(b, rng);
  Tape tape;
  Var va = tape.leaf(a, true);
  Var vb = tape.leaf(b, true);
  Var c = matmul(va, vb);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      REQUIRE_THAT(c.value().at(i, j),
                   Catch::Matchers::WithinAbs(s, 1e-12));
    }
}

TEST_CASE("elementwise ops and mean_all backprop against finite differences") {
  Rng rng(11);
  ParameterStore store;
  Parameter& pa = store.create("a", {4, 5});
  Parameter& pb = store.create("b", {4, 5});
  fill_uniform(pa.value, rng);
  fill_uniform(pb.value, rng);

  auto forward = [&]() {
    Tape tape;
    Var a = tape.param(pa);
    Var b = tape.param(pb);
    Var y = mean_all(mul(sigmoid(a), amt::tanh(add(a, mul(a, b)))));
    return std::pair<Tape, Var>(std::move(tape), y);
  };

  auto loss_fn = [&]() {
    Tape tape;
    Var a = tape.param(pa);
    Var b = tape.param(pb);
    return mean_all(mul(sigmoid(a), amt::tanh(add(a, mul(a, b))))).value().item();
  };
  auto backward_fn = [&]() {
    Tape tape;
    Var a = tape.param(pa);
    Var b = tape.param(pb);
    Var y = mean_all(mul(sigmoid(a), amt::tanh(add(a, mul(a, b)))));
    tape.backward(y);
    tape.apply_param_grads();
  };
  Rng pick(3);
  auto res = amt_test::gradcheck(store, loss_fn, backward_fn, 8, pick);
  INFO(res.worst_param);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("linear layer gradients") {
  Rng rng(13);
  ParameterStore store;
  Parameter& w = store.create("w", {5, 3});
  Parameter& b = store.create("b", {3});
  Parameter& x = store.create("x", {4, 5});
  fill_uniform(w.value, rng);
  fill_uniform(b.value, rng);
  fill_uniform(x.value, rng);
  auto loss_fn = [&]() {
    Tape tape;
    return mean_all(sigmoid(linear(tape.param(x), tape.param(w),
                                   tape.param(b))))
        .value()
        .item();
  };
  auto backward_fn = [&]() {
    Tape tape;
    Var y = mean_all(sigmoid(linear(tape.param(x), tape.param(w),
                                    tape.param(b))));
    tape.backward(y);
    tape.apply_param_grads();
  };
  Rng pick(5);
  auto res = amt_test::gradcheck(store, loss_fn, backward_fn, 10, pick);
  INFO(res.worst_param);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("stop_gradient blocks the backward path") {
  ParameterStore store;
  Parameter& a = store.create("a", {2, 2});
  a.value.fill(0.3);
  Tape tape;
  Var va = tape.param(a);
  Var y = mean_all(mul(stop_gradient(va), va));
  tape.backward(y);
  tape.apply_param_grads();
  // d/da mean(sg(a) * a) = sg(a)/N = 0.3/4
  for (std::size_t i = 0; i < 4; ++i)
    REQUIRE_THAT(a.grad[i], Catch::Matchers::WithinAbs(0.075, 1e-12));
}

TEST_CASE("concat_cols splits gradient") {
  ParameterStore store;
  Parameter& a = store.create("a", {2, 2});
  Parameter& b = store.create("b", {2, 3});
  a.value.fill(1.0);
  b.value.fill(2.0);
  Tape tape;
  Var c = concat_cols(tape.param(a), tape.param(b));
  REQUIRE(c.value().shape() == std::vector<std::size_t>{2, 5});
  REQUIRE(c.value().at(0, 1) == 1.0);
  REQUIRE(c.value().at(0, 2) == 2.0);
  Var y = mean_all(c);
  tape.backward(y);
  tape.apply_param_grads();
  REQUIRE_THAT(a.grad[0], Catch::Matchers::WithinAbs(0.1, 1e-12));
  REQUIRE_THAT(b.grad[0], Catch::Matchers::WithinAbs(0.1, 1e-12));
}

TEST_CASE("bce analytic values") {
  // constant 0.5 prediction gives ln 2 regardless of target
  Tape tape;
  Tensor p({3, 4});
  p.fill(0.5);
  Tensor y({3, 4});
  y[0] = 1.0;
  y[5] = 1.0;
  Var loss = bce_mean(tape.leaf(p, false), y);
  REQUIRE_THAT(loss.value().item(),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-12));

  // perfect prediction at the clamp boundary
  Tape tape2;
  Tensor p2({2, 2});
  Tensor y2({2, 2});
  p2[0] = 1.0 - kBceEps;
  y2[0] = 1.0;
  p2[1] = kBceEps;
  p2[2] = kBceEps;
  p2[3] = 1.0 - kBceEps;
  y2[3] = 1.0;
  REQUIRE(bce_mean(tape2.leaf(p2, false), y2).value().item() <= 1e-6);
}

TEST_CASE("bce matches scalar-loop oracle on random instances") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p({3, 2}), y({3, 2});
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = rng.uniform(0.001, 0.999);
      y[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    double expect = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      expect += bce_scalar(p[i], y[i]);
    expect /= static_cast<double>(p.size());
    Tape tape;
    REQUIRE_THAT(bce_mean(tape.leaf(p, false), y).value().item(),
                 Catch::Matchers::WithinAbs(expect, 1e-12));
  }
}

TEST_CASE("bce gradient against finite differences") {
  Rng rng(19);
  ParameterStore store;
  Parameter& x = store.create("x", {3, 3});
  fill_uniform(x.value, rng);
  Tensor y({3, 3});
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.bernoulli(0.4);
  auto loss_fn = [&]() {
    Tape tape;
    return bce_mean(sigmoid(tape.param(x)), y).value().item();
  };
  auto backward_fn = [&]() {
    Tape tape;
    Var l = bce_mean(sigmoid(tape.param(x)), y);
    tape.backward(l);
    tape.apply_param_grads();
  };
  Rng pick(23);
  auto res = amt_test::gradcheck(store, loss_fn, backward_fn, 9, pick);
  INFO(res.worst_param);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("adam leaves parameters unchanged for zero gradient and zero lr") {
  ParameterStore store;
  Parameter& p = store.create("p", {4});
  Rng rng(29);
  fill_uniform(p.value, rng);
  Tensor before = p.value;

  SECTION("zero gradient from fresh state") {
    Adam::Config cfg;
    cfg.lr = 1e-3;
    Adam opt(store, cfg);
    store.zero_grad();
    opt.step();
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(p.value[i] == before[i]);
  }
  SECTION("zero learning rate") {
    Adam::Config cfg;
    cfg.lr = 0.0;
    Adam opt(store, cfg);
    for (std::size_t i = 0; i < 4; ++i) p.grad[i] = 1.0;
    opt.step();
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(p.value[i] == before[i]);
  }
}

TEST_CASE("adam descends a quadratic") {
  ParameterStore store;
  Parameter& p = store.create("p", {2});
  p.value[0] = 3.0;
  p.value[1] = -2.0;
  Adam::Config cfg;
  cfg.lr = 0.05;
  Adam opt(store, cfg);
  for (int i = 0; i < 400; ++i) {
    store.zero_grad();
    p.grad[0] = 2.0 * p.value[0];
    p.grad[1] = 2.0 * p.value[1];
    opt.step();
  }
  REQUIRE(std::abs(p.value[0]) < 0.05);
  REQUIRE(std::abs(p.value[1]) < 0.05);
}
