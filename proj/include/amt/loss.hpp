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

#ifndef AMT_LOSS_HPP
#define AMT_LOSS_HPP

#include <memory>

#include "amt/autograd.hpp"

namespace amt {

constexpr double kBceEps = 1e-7;

/// Mean elementwise binary cross entropy. Predictions are clamped to
/// [eps, 1-eps]; the gradient is zero where the clamp is active.
inline Var bce_mean(Var pred, const Tensor& target, double eps = kBceEps) {
  Tape& t = *pred.tape;
  const Tensor& pv = t.value(pred);
  require(pv.same_shape(target),
          "bce_mean: prediction/target shape mismatch");
  require(pv.size() > 0, "bce_mean: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::min(std::max(pv[i], eps), 1.0 - eps);
    const double y = target[i];
    s -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  const double inv = 1.0 / static_cast<double>(pv.size());
  auto tgt = std::make_shared<Tensor>(target);
  return t.make(Tensor::scalar(s * inv), t.node(pred.id).needs_grad,
                [pred, tgt, eps, inv](Tape& tp, int self) {
                  if (!tp.node(pred.id).needs_grad) return;
                  const double g = tp.grad(self)[0] * inv;
                  const Tensor& pv2 = tp.value(pred);
                  Tensor& gp = tp.grad(pred);
                  for (std::size_t i = 0; i < pv2.size(); ++i) {
                    if (pv2[i] <= eps || pv2[i] >= 1.0 - eps) continue;
                    const double p = pv2[i];
                    gp[i] += g * (p - (*tgt)[i]) / (p * (1.0 - p));
                  }
                });
}

/// Scalar convenience for tests and oracles: BCE of one element.
inline double bce_scalar(double p, double y, double eps = kBceEps) {
  const double pc = std::min(std::max(p, eps), 1.0 - eps);
  return -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
}

/// Per-step loss report. `total` is defined as onset_term + frame_term;
/// disabled components contribute exactly zero.
struct LossValue {
  double total = 0.0;
  double onset_term = 0.0;
  double frame_term = 0.0;
};

}  // namespace amt

#endif  // AMT_LOSS_HPP
