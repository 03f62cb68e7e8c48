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

#include "amt/loss.hpp"
#include "amt/model.hpp"
#include "helpers.hpp"

using namespace amt;
using amt_test::fill_uniform;

namespace {

ModelConfig toy_config(Variant v, AttentionTarget at, int d) {
  ModelConfig c;
  c.variant = v;
  c.attention_target = at;
  c.window_d = d;
  c.n_mels = 16;
  c.conv_channels = {2, 2, 3, 3};
  c.lstm_hidden = 3;
  c.n_feat = 88;
  c.attn_dim = 4;
  c.conv_probe_channels = 2;
  c.seed = 42;
  return c;
}

Tensor random_spec(std::size_t T, std::size_t n_mels, std::uint64_t seed) {
  Tensor s({T, n_mels});
  Rng rng(seed);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.uniform(0.0, 1.0);
  return s;
}

}  // namespace

TEST_CASE("zero spectrogram with zero-initialized heads gives 0.5 exactly") {
  Model m(toy_config(Variant::kFull, AttentionTarget::kNone, 0));
  m.params().find("onset.head.w")->value.fill(0.0);
  m.params().find("onset.head.b")->value.fill(0.0);
  m.params().find("frame.head.w")->value.fill(0.0);
  m.params().find("frame.head.b")->value.fill(0.0);
  Tensor spec({10, 16});
  StackOutputs out = m.infer(spec);
  for (std::size_t i = 0; i < out.y_onset_hat.size(); ++i)
    REQUIRE(out.y_onset_hat[i] == 0.5);
  for (std::size_t i = 0; i < out.y_frame_hat.size(); ++i)
    REQUIRE(out.y_frame_hat[i] == 0.5);
}

TEST_CASE("shape contract holds for T in {1, 640} across variants") {
  for (auto v : {Variant::kFull, Variant::kNoOnsetStack, Variant::kNoBilstm,
                 Variant::kLinearProbe, Variant::kConvProbe}) {
    Model m(toy_config(v, v == Variant::kNoOnsetStack || v == Variant::kFull ||
                              v == Variant::kNoBilstm
                          ? AttentionTarget::kNone
                          : AttentionTarget::kSpec,
                       2));
    for (std::size_t T : {std::size_t{1}, std::size_t{640}}) {
      StackOutputs out = m.infer(random_spec(T, 16, T));
      REQUIRE(out.y_frame_hat.dim(0) == T);
      REQUIRE(out.y_frame_hat.dim(1) == 88);
      if (m.has_onset_head()) {
        REQUIRE(out.y_onset_hat.dim(0) == T);
        for (std::size_t i = 0; i < out.y_onset_hat.size(); ++i) {
          REQUIRE(out.y_onset_hat[i] >= 0.0);
          REQUIRE(out.y_onset_hat[i] <= 1.0);
        }
      }
      for (std::size_t i = 0; i < out.y_frame_hat.size(); ++i) {
        REQUIRE(out.y_frame_hat[i] >= 0.0);
        REQUIRE(out.y_frame_hat[i] <= 1.0);
      }
    }
  }
}

TEST_CASE("seed and config fully determine outputs") {
  ModelConfig cfg = toy_config(Variant::kFull, AttentionTarget::kSpec, 3);
  Tensor spec = random_spec(21, 16, 5);
  Model a(cfg), b(cfg);
  StackOutputs oa = a.infer(spec), ob = b.infer(spec);
  REQUIRE(oa.y_frame_hat.size() == ob.y_frame_hat.size());
  for (std::size_t i = 0; i < oa.y_frame_hat.size(); ++i)
    REQUIRE(oa.y_frame_hat[i] == ob.y_frame_hat[i]);
  for (std::size_t i = 0; i < oa.y_onset_hat.size(); ++i)
    REQUIRE(oa.y_onset_hat[i] == ob.y_onset_hat[i]);
  REQUIRE(oa.attention.has_value());
  for (std::size_t i = 0; i < oa.attention->weights.size(); ++i)
    REQUIRE(oa.attention->weights[i] == ob.attention->weights[i]);

  // different seed changes the activations
  ModelConfig cfg2 = cfg;
  cfg2.seed = 43;
  Model c(cfg2);
  StackOutputs oc = c.infer(spec);
  bool any_diff = false;
  for (std::size_t i = 0; i < oa.y_frame_hat.size(); ++i)
    if (oa.y_frame_hat[i] != oc.y_frame_hat[i]) any_diff = true;
  REQUIRE(any_diff);
}

TEST_CASE("removing the biLSTM removes exactly the recurrence parameters") {
  ModelConfig full_cfg = toy_config(Variant::kFull, AttentionTarget::kNone, 0);
  ModelConfig nob_cfg = full_cfg;
  nob_cfg.variant = Variant::kNoBilstm;
  Model full(full_cfg), nob(nob_cfg);
  const std::size_t H = full_cfg.lstm_hidden;
  const std::size_t in = full_cfg.hidden_width();  // conv head width == 2H
  // per direction: Wx [in x 4H] + Wh [H x 4H] + bias [4H]; two directions,
  // two recurrent stacks (onset, frame)
  const std::size_t lstm_params =
      2 * 2 * (in * 4 * H + H * 4 * H + 4 * H);
  REQUIRE(full.trainable_parameter_count() -
              nob.trainable_parameter_count() ==
          lstm_params);
}

TEST_CASE("no_onset_stack drops the onset head and narrows the frame input") {
  ModelConfig cfg = toy_config(Variant::kNoOnsetStack, AttentionTarget::kNone, 0);
  Model m(cfg);
  REQUIRE_FALSE(m.has_onset_head());
  StackOutputs out = m.infer(random_spec(7, 16, 11));
  REQUIRE(out.y_onset_hat.empty());
  REQUIRE(out.y_feat_hat.dim(1) == cfg.n_feat);
  REQUIRE(out.y_frame_hat.dim(1) == 88);
  // frame conv stack consumes n_feat columns only
  REQUIRE(m.params().find("frame.fc.w") != nullptr);
}

TEST_CASE("inconsistent ablation combinations are rejected") {
  REQUIRE_THROWS_AS(
      Model(toy_config(Variant::kNoOnsetStack, AttentionTarget::kOnset, 2)),
      config_error);
  REQUIRE_THROWS_AS(
      Model(toy_config(Variant::kLinearProbe, AttentionTarget::kOnset, 2)),
      config_error);
  REQUIRE_THROWS_AS(
      Model(toy_config(Variant::kLinearProbe, AttentionTarget::kFeat, 2)),
      config_error);
  REQUIRE_THROWS_AS(
      Model(toy_config(Variant::kConvProbe, AttentionTarget::kFeat, 2)),
      config_error);
  ModelConfig bad = toy_config(Variant::kFull, AttentionTarget::kSpec, -1);
  REQUIRE_THROWS_AS(Model(bad), config_error);
}

TEST_CASE("frame loss does not reach onset parameters through the concat") {
  ModelConfig cfg = toy_config(Variant::kFull, AttentionTarget::kNone, 0);
  Tensor spec = random_spec(6, 16, 13);
  Tensor target({6, 88});
  Rng rng(17);
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = rng.bernoulli(0.2) ? 1.0 : 0.0;

  auto frame_grad_on_onset = [&](bool stop) {
    ModelConfig c = cfg;
    c.stop_onset_gradient = stop;
    Model m(c);
    m.params().zero_grad();
    Tape tape;
    Model::Forward f = m.forward(tape, spec, true);
    tape.backward(bce_mean(f.frame, target));
    tape.apply_param_grads();
    double norm = 0.0;
    for (std::size_t i = 0; i < m.params().count(); ++i) {
      const Parameter& p = m.params().at(i);
      if (p.name.rfind("onset.", 0) != 0) continue;
      for (std::size_t k = 0; k < p.grad.size(); ++k)
        norm += std::abs(p.grad[k]);
    }
    return norm;
  };
  REQUIRE(frame_grad_on_onset(true) == 0.0);
  REQUIRE(frame_grad_on_onset(false) > 0.0);
}

TEST_CASE("frame loss reaches feat parameters through the concat") {
  Model m(toy_config(Variant::kFull, AttentionTarget::kNone, 0));
  Tensor spec = random_spec(6, 16, 19);
  Tensor target({6, 88});
  Rng rng(23);
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i] = rng.bernoulli(0.2) ? 1.0 : 0.0;
  m.params().zero_grad();
  Tape tape;
  Model::Forward f = m.forward(tape, spec, true);
  tape.backward(bce_mean(f.frame, target));
  tape.apply_param_grads();
  double norm = 0.0;
  for (std::size_t i = 0; i < m.params().count(); ++i) {
    const Parameter& p = m.params().at(i);
    if (p.name.rfind("feat.", 0) != 0) continue;
    for (std::size_t k = 0; k < p.grad.size(); ++k) norm += std::abs(p.grad[k]);
  }
  REQUIRE(norm > 0.0);
}

TEST_CASE("backprop matches central differences on a 5-frame 8-bin toy") {
  struct Case {
    Variant v;
    AttentionTarget at;
    int d;
  };
  const Case cases[] = {
      {Variant::kFull, AttentionTarget::kNone, 0},
      {Variant::kFull, AttentionTarget::kSpec, 1},
      {Variant::kFull, AttentionTarget::kOnset, 1},
      {Variant::kFull, AttentionTarget::kFeat, 2},
      {Variant::kNoOnsetStack, AttentionTarget::kSpec, 1},
      {Variant::kNoBilstm, AttentionTarget::kSpec, 1},
      {Variant::kLinearProbe, AttentionTarget::kSpec, 2},
      {Variant::kLinearProbe, AttentionTarget::kNone, 0},
      {Variant::kConvProbe, AttentionTarget::kSpec, 1},
  };
  Tensor spec = random_spec(5, 8, 29);
  Tensor t_on({5, 88}), t_fr({5, 88});
  Rng rng(31);
  for (std::size_t i = 0; i < t_fr.size(); ++i) {
    t_fr[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    t_on[i] = t_fr[i] == 1.0 && rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  for (const Case& tc : cases) {
    ModelConfig cfg = toy_config(tc.v, tc.at, tc.d);
    cfg.n_mels = 8;
    // gradients must flow into the onset stack for this check
    cfg.stop_onset_gradient = false;
    Model m(cfg);
    auto build = [&](Tape& tape) {
      Model::Forward f = m.forward(tape, spec, true);
      Var loss = bce_mean(f.frame, t_fr);
      if (m.has_onset_head()) loss = add(loss, bce_mean(f.onset, t_on));
      return loss;
    };
    auto loss_fn = [&]() {
      Tape tape;
      return build(tape).value().item();
    };
    auto backward_fn = [&]() {
      m.params().zero_grad();
      Tape tape;
      Var l = build(tape);
      tape.backward(l);
      tape.apply_param_grads();
    };
    Rng pick(37);
    auto res = amt_test::gradcheck(m.params(), loss_fn, backward_fn, 1, pick);
    INFO("variant=" << to_string(tc.v) << " target=" << to_string(tc.at)
                    << " worst=" << res.worst_param);
    REQUIRE(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("linear probe with D=0 is frame-wise logistic regression") {
  ModelConfig cfg = toy_config(Variant::kLinearProbe, AttentionTarget::kSpec, 0);
  Model m(cfg);
  Tensor spec = random_spec(4, 16, 41);
  StackOutputs out = m.infer(spec);
  const Tensor& w = m.params().find("probe.head.w")->value;
  const Tensor& b = m.params().find("probe.head.b")->value;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t p = 0; p < 88; ++p) {
      double z = b[p];
      for (std::size_t k = 0; k < 16; ++k) z += spec.at(t, k) * w.at(k, p);
      REQUIRE_THAT(out.y_frame_hat.at(t, p),
                   Catch::Matchers::WithinAbs(1.0 / (1.0 + std::exp(-z)),
                                              1e-12));
    }
}

TEST_CASE("probe outputs are local to the attention window") {
  for (auto v : {Variant::kLinearProbe, Variant::kConvProbe}) {
    const int D = 2;
    ModelConfig cfg = toy_config(v, AttentionTarget::kSpec, D);
    Model m(cfg);
    Tensor spec = random_spec(12, 16, 43);
    StackOutputs base = m.infer(spec);
    // perturb frame 9; outputs at t <= 6 must not move
    Tensor spec2 = spec;
    Rng rng(47);
    for (std::size_t k = 0; k < 16; ++k)
      spec2.at(9, k) = rng.uniform(0.0, 1.0);
    StackOutputs mod = m.infer(spec2);
    for (std::size_t t = 0; t <= 6; ++t)
      for (std::size_t p = 0; p < 88; ++p)
        REQUIRE(base.y_frame_hat.at(t, p) == mod.y_frame_hat.at(t, p));
    // and the perturbed frame itself must move
    bool changed = false;
    for (std::size_t p = 0; p < 88; ++p)
      if (base.y_frame_hat.at(9, p) != mod.y_frame_hat.at(9, p)) changed = true;
    REQUIRE(changed);
  }
}

TEST_CASE("attention map rows from inference sum to one") {
  ModelConfig cfg = toy_config(Variant::kFull, AttentionTarget::kFeat, 3);
  Model m(cfg);
  StackOutputs out = m.infer(random_spec(15, 16, 53));
  REQUIRE(out.attention.has_value());
  REQUIRE(out.attention->target == AttentionTarget::kFeat);
  REQUIRE(out.attention->weights.dim(1) == 7);
  for (std::size_t t = 0; t < 15; ++t) {
    double s = 0.0;
    for (std::size_t o = 0; o < 7; ++o) s += out.attention->weights.at(t, o);
    REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("model config json round trip preserves the hash") {
  ModelConfig cfg = toy_config(Variant::kConvProbe, AttentionTarget::kSpec, 5);
  cfg.stop_onset_gradient = false;
  ModelConfig back = model_config_from_json(to_json(cfg));
  REQUIRE(config_hash(cfg) == config_hash(back));
  REQUIRE(back.variant == Variant::kConvProbe);
  REQUIRE(back.window_d == 5);
  REQUIRE(back.conv_channels == cfg.conv_channels);
}
