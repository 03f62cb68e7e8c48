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

#ifndef AMT_ATTENTION_HPP
#define AMT_ATTENTION_HPP

#include <limits>
#include <memory>

#include "amt/autograd.hpp"

namespace amt {

/// Result of windowed additive attention over a sequence. `weights` rows hold
/// the (2D+1) scores per timestep; positions whose absolute frame falls
/// outside the sequence are exactly zero, the rest sum to one.
struct AttentionResult {
  Var context;                            // [T, N]
  std::shared_ptr<const Tensor> weights;  // [T, 2D+1]
};

/// Local additive attention: score(t, j) = v . tanh(W_q q_t + W_s s_j + b)
/// for j in [t-D, t+D] clamped to the sequence, then softmax over the window
/// and a weighted sum of s as the context.
///
/// q: [T, Hq] query sequence (the biLSTM hidden state, or the attended frame
/// itself for capacity-constrained probes where q aliases s); s: [T, N]
/// attended sequence. Out-of-range window positions are masked before the
/// softmax, never invented.
inline AttentionResult local_additive_attention(Var q, Var s, Var w_q,
                                                Var w_s, Var b, Var v,
                                                int window_d) {
  if (window_d < 0) throw config_error("attention window D must be >= 0");
  Tape& t = detail::same_tape(q, s);
  const Tensor& qv = t.value(q);
  const Tensor& sv = t.value(s);
  require(qv.rank() == 2 && sv.rank() == 2 && qv.dim(0) == sv.dim(0),
          "attention: query/sequence length mismatch");
  const auto T = qv.dim(0), Hq = qv.dim(1), N = sv.dim(1);
  const Tensor& wqv = t.value(w_q);
  const Tensor& wsv = t.value(w_s);
  const Tensor& bv = t.value(b);
  const Tensor& vv = t.value(v);
  require(wqv.rank() == 2 && wqv.dim(0) == Hq, "attention: bad W_q");
  require(wsv.rank() == 2 && wsv.dim(0) == N, "attention: bad W_s");
  const auto A = wqv.dim(1);
  require(wsv.dim(1) == A && bv.dim(0) == A && vv.dim(0) == A,
          "attention: projection width mismatch");
  const std::size_t W = 2 * static_cast<std::size_t>(window_d) + 1;
  const int D = window_d;

  // Projections are shared across windows: P = q W_q, U = s W_s.
  auto P = std::make_shared<Tensor>(Tensor({T, A}));
  auto U = std::make_shared<Tensor>(Tensor({T, A}));
  MatMap(P->data(), T, A).noalias() =
      ConstMatMap(qv.data(), T, Hq) * ConstMatMap(wqv.data(), Hq, A);
  MatMap(U->data(), T, A).noalias() =
      ConstMatMap(sv.data(), T, N) * ConstMatMap(wsv.data(), N, A);

  auto weights = std::make_shared<Tensor>(Tensor({T, W}));
  Tensor context({T, N});
  std::vector<double> scores(W);
  std::vector<double> z(A);
  for (std::size_t tt = 0; tt < T; ++tt) {
    const int lo = std::max(0, static_cast<int>(tt) - D);
    const int hi = std::min(static_cast<int>(T) - 1, static_cast<int>(tt) + D);
    double max_e = -std::numeric_limits<double>::infinity();
    for (int j = lo; j <= hi; ++j) {
      const double* pu = U->data() + static_cast<std::size_t>(j) * A;
      const double* pp = P->data() + tt * A;
      double e = 0.0;
      for (std::size_t k = 0; k < A; ++k)
        e += vv[k] * std::tanh(pp[k] + pu[k] + bv[k]);
      scores[static_cast<std::size_t>(j - (static_cast<int>(tt) - D))] = e;
      max_e = std::max(max_e, e);
    }
    double denom = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const std::size_t o =
          static_cast<std::size_t>(j - (static_cast<int>(tt) - D));
      scores[o] = std::exp(scores[o] - max_e);
      denom += scores[o];
    }
    double* wrow = weights->data() + tt * W;
    double* crow = context.data() + tt * N;
    for (int j = lo; j <= hi; ++j) {
      const std::size_t o =
          static_cast<std::size_t>(j - (static_cast<int>(tt) - D));
      const double a = scores[o] / denom;
      wrow[o] = a;
      const double* srow = sv.data() + static_cast<std::size_t>(j) * N;
      for (std::size_t k = 0; k < N; ++k) crow[k] += a * srow[k];
    }
  }

  bool ng = t.node(q.id).needs_grad || t.node(s.id).needs_grad ||
            t.node(w_q.id).needs_grad || t.node(w_s.id).needs_grad ||
            t.node(b.id).needs_grad || t.node(v.id).needs_grad;
  Var ctx = t.make(
      std::move(context), ng,
      [q, s, w_q, w_s, b, v, P, U, weights, T, Hq, N, A, D, W](Tape& tp,
                                                               int self) {
        const Tensor& g = tp.grad(self);  // [T, N]
        const Tensor& sv2 = tp.value(s);
        const Tensor& bv2 = tp.value(b);
        const Tensor& vv2 = tp.value(v);
        Tensor dP({T, A}), dU({T, A});
        Tensor* gs = tp.node(s.id).needs_grad ? &tp.grad(s) : nullptr;
        Tensor* gb = tp.node(b.id).needs_grad ? &tp.grad(b) : nullptr;
        Tensor* gv = tp.node(v.id).needs_grad ? &tp.grad(v) : nullptr;
        std::vector<double> da(W), de(W), zrow(A);
        for (std::size_t tt = 0; tt < T; ++tt) {
          const int lo = std::max(0, static_cast<int>(tt) - D);
          const int hi =
              std::min(static_cast<int>(T) - 1, static_cast<int>(tt) + D);
          const double* grow = g.data() + tt * N;
          const double* wrow = weights->data() + tt * W;
          // context direct path and softmax jacobian
          double dot = 0.0;
          for (int j = lo; j <= hi; ++j) {
            const std::size_t o =
                static_cast<std::size_t>(j - (static_cast<int>(tt) - D));
            const double* srow = sv2.data() + static_cast<std::size_t>(j) * N;
            double d = 0.0;
            for (std::size_t k = 0; k < N; ++k) d += grow[k] * srow[k];
            da[o] = d;
            dot += wrow[o] * d;
            if (gs) {
              double* gsrow = gs->data() + static_cast<std::size_t>(j) * N;
              for (std::size_t k = 0; k < N; ++k)
                gsrow[k] += wrow[o] * grow[k];
            }
          }
          for (int j = lo; j <= hi; ++j) {
            const std::size_t o =
                static_cast<std::size_t>(j - (static_cast<int>(tt) - D));
            de[o] = wrow[o] * (da[o] - dot);
          }
          // score path: e = v . tanh(P_t + U_j + b)
          const double* pp = P->data() + tt * A;
          double* dprow = dP.data() + tt * A;
          for (int j = lo; j <= hi; ++j) {
            const std::size_t o =
                static_cast<std::size_t>(j - (static_cast<int>(tt) - D));
            if (de[o] == 0.0) continue;
            const double* pu = U->data() + static_cast<std::size_t>(j) * A;
            double* durow = dU.data() + static_cast<std::size_t>(j) * A;
            for (std::size_t k = 0; k < A; ++k) {
              const double zk = std::tanh(pp[k] + pu[k] + bv2[k]);
              const double dpre = de[o] * vv2[k] * (1.0 - zk * zk);
              if (gv) (*gv)[k] += de[o] * zk;
              dprow[k] += dpre;
              durow[k] += dpre;
              if (gb) (*gb)[k] += dpre;
            }
          }
        }
        if (tp.node(q.id).needs_grad)
          MatMap(tp.grad(q).data(), T, Hq).noalias() +=
              ConstMatMap(dP.data(), T, A) *
              ConstMatMap(tp.value(w_q).data(), Hq, A).transpose();
        if (tp.node(w_q.id).needs_grad)
          MatMap(tp.grad(w_q).data(), Hq, A).noalias() +=
              ConstMatMap(tp.value(q).data(), T, Hq).transpose() *
              ConstMatMap(dP.data(), T, A);
        if (gs)
          MatMap(gs->data(), T, N).noalias() +=
              ConstMatMap(dU.data(), T, A) *
              ConstMatMap(tp.value(w_s).data(), N, A).transpose();
        if (tp.node(w_s.id).needs_grad)
          MatMap(tp.grad(w_s).data(), N, A).noalias() +=
              ConstMatMap(sv2.data(), T, N).transpose() *
              ConstMatMap(dU.data(), T, A);
      });
  return AttentionResult{ctx, weights};
}

}  // namespace amt

#endif  // AMT_ATTENTION_HPP
