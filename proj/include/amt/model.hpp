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

#ifndef AMT_MODEL_HPP
#define AMT_MODEL_HPP

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "amt/attention.hpp"
#include "amt/nn.hpp"

namespace amt {

constexpr std::size_t kNumPitches = 88;

enum class Variant { kFull, kNoOnsetStack, kNoBilstm, kLinearProbe, kConvProbe };
enum class AttentionTarget { kNone, kSpec, kOnset, kFeat };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoOnsetStack: return "no_onset_stack";
    case Variant::kNoBilstm: return "no_bilstm";
    case Variant::kLinearProbe: return "linear_probe";
    case Variant::kConvProbe: return "conv_probe";
  }
  return "?";
}

inline const char* to_string(AttentionTarget t) {
  switch (t) {
    case AttentionTarget::kNone: return "none";
    case AttentionTarget::kSpec: return "spec";
    case AttentionTarget::kOnset: return "onset";
    case AttentionTarget::kFeat: return "feat";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "full") return Variant::kFull;
  if (s == "no_onset_stack") return Variant::kNoOnsetStack;
  if (s == "no_bilstm") return Variant::kNoBilstm;
  if (s == "linear_probe") return Variant::kLinearProbe;
  if (s == "conv_probe") return Variant::kConvProbe;
  throw config_error("unknown model variant: " + s);
}

inline AttentionTarget attention_target_from_string(const std::string& s) {
  if (s == "none") return AttentionTarget::kNone;
  if (s == "spec") return AttentionTarget::kSpec;
  if (s == "onset") return AttentionTarget::kOnset;
  if (s == "feat") return AttentionTarget::kFeat;
  throw config_error("unknown attention target: " + s);
}

/// Model architecture settings. The conv head width is tied to the biLSTM so
/// the hidden sequence h_t keeps the same dimension (2 * lstm_hidden) whether
/// or not the recurrence is present; removing the biLSTM then changes the
/// parameter count by exactly the recurrence weights.
struct ModelConfig {
  Variant variant = Variant::kFull;
  AttentionTarget attention_target = AttentionTarget::kNone;
  int window_d = 0;
  std::size_t n_mels = 229;
  std::vector<std::size_t> conv_channels = {48, 48, 96, 96};
  std::size_t lstm_hidden = 128;
  std::size_t n_feat = 88;
  std::size_t attn_dim = 64;
  std::size_t conv_probe_channels = 16;
  bool stop_onset_gradient = true;
  std::uint64_t seed = 0;

  std::size_t hidden_width() const { return 2 * lstm_hidden; }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"variant", to_string(c.variant)},
                        {"attention_target", to_string(c.attention_target)},
                        {"window_d", c.window_d},
                        {"n_mels", c.n_mels},
                        {"conv_channels", c.conv_channels},
                        {"lstm_hidden", c.lstm_hidden},
                        {"n_feat", c.n_feat},
                        {"attn_dim", c.attn_dim},
                        {"conv_probe_channels", c.conv_probe_channels},
                        {"stop_onset_gradient", c.stop_onset_gradient},
                        {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant"));
  if (j.contains("attention_target"))
    c.attention_target = attention_target_from_string(j.at("attention_target"));
  if (j.contains("window_d")) c.window_d = j.at("window_d").get<int>();
  if (j.contains("n_mels")) c.n_mels = j.at("n_mels").get<std::size_t>();
  if (j.contains("conv_channels"))
    c.conv_channels = j.at("conv_channels").get<std::vector<std::size_t>>();
  if (j.contains("lstm_hidden"))
    c.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  if (j.contains("n_feat")) c.n_feat = j.at("n_feat").get<std::size_t>();
  if (j.contains("attn_dim")) c.attn_dim = j.at("attn_dim").get<std::size_t>();
  if (j.contains("conv_probe_channels"))
    c.conv_probe_channels = j.at("conv_probe_channels").get<std::size_t>();
  if (j.contains("stop_onset_gradient"))
    c.stop_onset_gradient = j.at("stop_onset_gradient").get<bool>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline std::uint64_t config_hash(const ModelConfig& c) {
  return fnv1a64(to_json(c).dump());
}

/// Attention weights captured during a forward pass.
struct AttentionMap {
  Tensor weights;  // [T, 2D+1]; masked boundary positions are exactly zero
  int window_d = 0;
  AttentionTarget target = AttentionTarget::kNone;
};

/// Stack activations for one recording.
struct StackOutputs {
  Tensor y_onset_hat;  // [T, 88] in [0,1]; empty when the variant has no onset stack
  Tensor y_feat_hat;   // [T, n_feat]; empty for probes
  Tensor y_frame_hat;  // [T, 88] in [0,1]
  Tensor hidden;       // [T, 2H] h_t sequence; empty for probes
  std::optional<AttentionMap> attention;
};

/// The three-stack transcription model plus its capacity-constrained probe
/// variants. One instance owns one parameter store; forward passes may run
/// concurrently only on read-only parameters.
class Model {
 public:
  struct Forward {
    Var onset;   // invalid when the variant has no onset head
    Var feat;    // invalid for probes
    Var frame;
    Var hidden;  // invalid for probes
    std::shared_ptr<const Tensor> attn_weights;  // null when attention is off
  };

  explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
    validate(cfg_);
    build();
    init_params();
  }

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  bool has_onset_head() const {
    return cfg_.variant == Variant::kFull || cfg_.variant == Variant::kNoBilstm;
  }
  bool has_bilstm() const {
    return cfg_.variant == Variant::kFull ||
           cfg_.variant == Variant::kNoOnsetStack;
  }
  bool is_probe() const {
    return cfg_.variant == Variant::kLinearProbe ||
           cfg_.variant == Variant::kConvProbe;
  }

  std::size_t trainable_parameter_count() const {
    return store_.trainable_size();
  }

  Forward forward(Tape& tape, const Tensor& spec, bool training) {
    require(spec.rank() == 2 && spec.dim(1) == cfg_.n_mels,
            "model: spectrogram must be [T x n_mels]");
    require(spec.dim(0) >= 1, "model: empty spectrogram");
    Var x = tape.leaf(spec, false);
    if (is_probe()) return probe_forward(tape, x);

    Forward out;
    // the feat stack's fully connected layer is its output head: no
    // nonlinearity, features live in R^(T x n_feat)
    Var feat = conv_stack_forward(tape, feat_, x, training,
                                  /*relu_head=*/false);
    out.feat = feat;

    Var frame_in = feat;
    Var onset_for_concat;
    if (has_onset_head()) {
      Var oh = conv_stack_forward(tape, onset_, x, training);
      if (has_bilstm())
        oh = bilstm(oh, tape.param(*onset_lstm_.wx_f), tape.param(*onset_lstm_.wh_f),
                    tape.param(*onset_lstm_.b_f), tape.param(*onset_lstm_.wx_b),
                    tape.param(*onset_lstm_.wh_b), tape.param(*onset_lstm_.b_b));
      out.onset = sigmoid(linear(oh, tape.param(*onset_head_w_),
                                 tape.param(*onset_head_b_)));
      onset_for_concat =
          cfg_.stop_onset_gradient ? stop_gradient(out.onset) : out.onset;
      frame_in = concat_cols(onset_for_concat, feat);
    }

    Var fh = conv_stack_forward(tape, frame_, frame_in, training);
    if (has_bilstm())
      fh = bilstm(fh, tape.param(*frame_lstm_.wx_f), tape.param(*frame_lstm_.wh_f),
                  tape.param(*frame_lstm_.b_f), tape.param(*frame_lstm_.wx_b),
                  tape.param(*frame_lstm_.wh_b), tape.param(*frame_lstm_.b_b));
    out.hidden = fh;

    Var cls_in = fh;
    if (cfg_.attention_target != AttentionTarget::kNone) {
      Var s;
      switch (cfg_.attention_target) {
        case AttentionTarget::kSpec: s = x; break;
        case AttentionTarget::kOnset: s = onset_for_concat; break;
        case AttentionTarget::kFeat: s = feat; break;
        default: break;
      }
      auto att = local_additive_attention(
          fh, s, tape.param(*attn_wq_), tape.param(*attn_ws_),
          tape.param(*attn_b_), tape.param(*attn_v_), cfg_.window_d);
      out.attn_weights = att.weights;
      cls_in = concat_cols(fh, att.context);
    }
    out.frame = sigmoid(
        linear(cls_in, tape.param(*frame_head_w_), tape.param(*frame_head_b_)));
    return out;
  }

  /// Evaluation-mode forward returning plain tensors.
  StackOutputs infer(const Tensor& spec) {
    Tape tape;
    Forward f = forward(tape, spec, /*training=*/false);
    StackOutputs out;
    if (f.onset.valid()) out.y_onset_hat = f.onset.value();
    if (f.feat.valid()) out.y_feat_hat = f.feat.value();
    out.y_frame_hat = f.frame.value();
    if (f.hidden.valid()) out.hidden = f.hidden.value();
    if (f.attn_weights)
      out.attention = AttentionMap{*f.attn_weights, cfg_.window_d,
                                   cfg_.attention_target};
    return out;
  }

  static void validate(const ModelConfig& c) {
    if (c.window_d < 0) throw config_error("window_d must be >= 0");
    if (c.n_mels < 1) throw config_error("n_mels must be >= 1");
    if (c.lstm_hidden < 1) throw config_error("lstm_hidden must be >= 1");
    const bool probe = c.variant == Variant::kLinearProbe ||
                       c.variant == Variant::kConvProbe;
    if (c.attention_target == AttentionTarget::kOnset &&
        (c.variant == Variant::kNoOnsetStack || probe))
      throw config_error(
          "attention on the onset stack requires a variant that has one");
    if (probe && c.attention_target == AttentionTarget::kFeat)
      throw config_error("probes attend to the spectrogram only");
    if (!probe && c.conv_channels.size() != 4)
      throw config_error("expected four convolutional blocks");
  }

 private:
  struct ConvBlock {
    Parameter *w, *b, *gamma, *beta, *run_mean, *run_var;
  };
  struct ConvStack {
    std::vector<ConvBlock> blocks;
    Parameter *fc_w = nullptr, *fc_b = nullptr;
    std::size_t in_width = 0;
  };
  struct LstmParams {
    Parameter *wx_f, *wh_f, *b_f, *wx_b, *wh_b, *b_b;
  };

  ConvStack make_conv_stack(const std::string& prefix, std::size_t in_width,
                            std::size_t out_width) {
    ConvStack s;
    s.in_width = in_width;
    std::size_t cin = 1;
    std::size_t f = in_width;
    for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
      const std::size_t cout = cfg_.conv_channels[i];
      const std::string base = prefix + ".conv" + std::to_string(i + 1);
      ConvBlock b;
      b.w = &store_.create(base + ".w", {cout, cin, 3, 3});
      b.b = &store_.create(base + ".b", {cout});
      b.gamma = &store_.create(base + ".bn.gamma", {cout});
      b.beta = &store_.create(base + ".bn.beta", {cout});
      b.run_mean = &store_.create(base + ".bn.running_mean", {cout}, false);
      b.run_var = &store_.create(base + ".bn.running_var", {cout}, false);
      s.blocks.push_back(b);
      cin = cout;
      if (f >= 2) f /= 2;  // pooling stops once the frequency axis is width 1
    }
    s.fc_w = &store_.create(prefix + ".fc.w", {cin * f, out_width});
    s.fc_b = &store_.create(prefix + ".fc.b", {out_width});
    return s;
  }

  LstmParams make_lstm(const std::string& prefix, std::size_t in_width,
                       std::size_t hidden) {
    LstmParams l;
    l.wx_f = &store_.create(prefix + ".fwd.wx", {in_width, 4 * hidden});
    l.wh_f = &store_.create(prefix + ".fwd.wh", {hidden, 4 * hidden});
    l.b_f = &store_.create(prefix + ".fwd.b", {4 * hidden});
    l.wx_b = &store_.create(prefix + ".bwd.wx", {in_width, 4 * hidden});
    l.wh_b = &store_.create(prefix + ".bwd.wh", {hidden, 4 * hidden});
    l.b_b = &store_.create(prefix + ".bwd.b", {4 * hidden});
    return l;
  }

  void build() {
    const std::size_t H2 = cfg_.hidden_width();
    if (cfg_.variant == Variant::kLinearProbe) {
      if (cfg_.attention_target != AttentionTarget::kNone) make_attention(cfg_.n_mels, cfg_.n_mels);
      probe_head_w_ = &store_.create("probe.head.w", {cfg_.n_mels, kNumPitches});
      probe_head_b_ = &store_.create("probe.head.b", {kNumPitches});
      return;
    }
    if (cfg_.variant == Variant::kConvProbe) {
      probe_conv_w_ = &store_.create(
          "probe.conv.w", {cfg_.conv_probe_channels, 1, 1, 3});
      probe_conv_b_ = &store_.create("probe.conv.b", {cfg_.conv_probe_channels});
      std::size_t width = cfg_.conv_probe_channels * cfg_.n_mels;
      if (cfg_.attention_target != AttentionTarget::kNone) {
        make_attention(cfg_.n_mels, cfg_.n_mels);
        width += cfg_.n_mels;
      }
      probe_head_w_ = &store_.create("probe.head.w", {width, kNumPitches});
      probe_head_b_ = &store_.create("probe.head.b", {kNumPitches});
      return;
    }

    if (has_onset_head()) {
      onset_ = make_conv_stack("onset", cfg_.n_mels, H2);
      if (has_bilstm()) onset_lstm_ = make_lstm("onset.lstm", H2, cfg_.lstm_hidden);
      onset_head_w_ = &store_.create("onset.head.w", {H2, kNumPitches});
      onset_head_b_ = &store_.create("onset.head.b", {kNumPitches});
    }
    feat_ = make_conv_stack("feat", cfg_.n_mels, cfg_.n_feat);

    const std::size_t frame_in =
        cfg_.n_feat + (has_onset_head() ? kNumPitches : 0);
    frame_ = make_conv_stack("frame", frame_in, H2);
    if (has_bilstm()) frame_lstm_ = make_lstm("frame.lstm", H2, cfg_.lstm_hidden);

    std::size_t cls_in = H2;
    if (cfg_.attention_target != AttentionTarget::kNone) {
      const std::size_t n_s = attended_width();
      make_attention(H2, n_s);
      cls_in += n_s;
    }
    frame_head_w_ = &store_.create("frame.head.w", {cls_in, kNumPitches});
    frame_head_b_ = &store_.create("frame.head.b", {kNumPitches});
  }

  std::size_t attended_width() const {
    switch (cfg_.attention_target) {
      case AttentionTarget::kSpec: return cfg_.n_mels;
      case AttentionTarget::kOnset: return kNumPitches;
      case AttentionTarget::kFeat: return cfg_.n_feat;
      default: return 0;
    }
  }

  void make_attention(std::size_t query_width, std::size_t seq_width) {
    attn_wq_ = &store_.create("attn.wq", {query_width, cfg_.attn_dim});
    attn_ws_ = &store_.create("attn.ws", {seq_width, cfg_.attn_dim});
    attn_b_ = &store_.create("attn.b", {cfg_.attn_dim});
    attn_v_ = &store_.create("attn.v", {cfg_.attn_dim});
  }

  std::size_t bias_fan_in(const std::string& bias_name) const {
    const std::string w_name =
        bias_name.substr(0, bias_name.size() - 2) + ".w";
    const Parameter* w = store_.find(w_name);
    if (!w) return 0;  // no sibling weight (attention bias): caller falls back
    return w->value.rank() == 4
               ? w->value.dim(1) * w->value.dim(2) * w->value.dim(3)
               : w->value.dim(0);
  }

  void init_params() {
    for (std::size_t i = 0; i < store_.count(); ++i) {
      Parameter& p = store_.at(i);
      Rng rng = Rng::keyed(cfg_.seed, p.name);
      const std::string& n = p.name;
      const bool is_bn_gamma = n.ends_with("bn.gamma");
      const bool is_bn_other = n.ends_with("bn.beta") ||
                               n.ends_with("running_mean");
      const bool is_run_var = n.ends_with("running_var");
      const bool is_bias = n.ends_with(".b") && !is_bn_other;
      if (is_bn_gamma || is_run_var) {
        p.value.fill(1.0);
      } else if (is_bn_other) {
        p.value.fill(0.0);
      } else if (is_bias && n.find(".lstm.") != std::string::npos) {
        // forget-gate bias 1.0 on recurrent cells (gate order i, f, g, o)
        p.value.fill(0.0);
        const std::size_t h4 = p.value.size();
        for (std::size_t k = h4 / 4; k < h4 / 2; ++k) p.value[k] = 1.0;
      } else {
        // uniform fan-in scaling; fan-in is the leading extent for rank-2
        // weights and Cin*kt*kf for conv kernels; biases use their layer's
        // fan-in
        std::size_t fan_in = 1;
        if (p.value.rank() == 2) fan_in = p.value.dim(0);
        else if (p.value.rank() == 4)
          fan_in = p.value.dim(1) * p.value.dim(2) * p.value.dim(3);
        else if (is_bias) fan_in = bias_fan_in(n);
        if (fan_in == 0 && p.value.rank() == 1) fan_in = p.value.dim(0);
        if (fan_in == 0) fan_in = 1;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t k = 0; k < p.value.size(); ++k)
          p.value[k] = rng.uniform(-bound, bound);
      }
    }
  }

  Var conv_stack_forward(Tape& tape, ConvStack& s, Var x_time_major,
                         bool training, bool relu_head = true) {
    Var h = unsqueeze_channel(x_time_major);
    for (ConvBlock& b : s.blocks) {
      h = conv2d(h, tape.param(*b.w), tape.param(*b.b));
      h = batchnorm_2d(h, tape.param(*b.gamma), tape.param(*b.beta),
                       *b.run_mean, *b.run_var, training);
      h = relu(h);
      if (h.value().dim(2) >= 2) h = maxpool_freq2(h);
    }
    h = conv_to_time_major(h);
    h = linear(h, tape.param(*s.fc_w), tape.param(*s.fc_b));
    return relu_head ? relu(h) : h;
  }

  Forward probe_forward(Tape& tape, Var x) {
    Forward out;
    Var cls_in;
    if (cfg_.variant == Variant::kLinearProbe) {
      if (cfg_.attention_target != AttentionTarget::kNone) {
        auto att = local_additive_attention(
            x, x, tape.param(*attn_wq_), tape.param(*attn_ws_),
            tape.param(*attn_b_), tape.param(*attn_v_), cfg_.window_d);
        out.attn_weights = att.weights;
        cls_in = att.context;
      } else {
        cls_in = x;
      }
    } else {
      Var c = relu(conv2d(unsqueeze_channel(x), tape.param(*probe_conv_w_),
                          tape.param(*probe_conv_b_)));
      Var flat = conv_to_time_major(c);
      if (cfg_.attention_target != AttentionTarget::kNone) {
        auto att = local_additive_attention(
            x, x, tape.param(*attn_wq_), tape.param(*attn_ws_),
            tape.param(*attn_b_), tape.param(*attn_v_), cfg_.window_d);
        out.attn_weights = att.weights;
        cls_in = concat_cols(flat, att.context);
      } else {
        cls_in = flat;
      }
    }
    out.frame = sigmoid(
        linear(cls_in, tape.param(*probe_head_w_), tape.param(*probe_head_b_)));
    return out;
  }

  ModelConfig cfg_;
  ParameterStore store_;
  ConvStack onset_, feat_, frame_;
  LstmParams onset_lstm_{}, frame_lstm_{};
  Parameter* onset_head_w_ = nullptr;
  Parameter* onset_head_b_ = nullptr;
  Parameter* frame_head_w_ = nullptr;
  Parameter* frame_head_b_ = nullptr;
  Parameter* attn_wq_ = nullptr;
  Parameter* attn_ws_ = nullptr;
  Parameter* attn_b_ = nullptr;
  Parameter* attn_v_ = nullptr;
  Parameter* probe_conv_w_ = nullptr;
  Parameter* probe_conv_b_ = nullptr;
  Parameter* probe_head_w_ = nullptr;
  Parameter* probe_head_b_ = nullptr;
};

}  // namespace amt

#endif  // AMT_MODEL_HPP
