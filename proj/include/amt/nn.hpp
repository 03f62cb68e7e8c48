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

#ifndef AMT_NN_HPP
#define AMT_NN_HPP

#include <memory>
#include <vector>

#include "amt/autograd.hpp"

namespace amt {

// ---------------------------------------------------------------------------
// Layout ops
// ---------------------------------------------------------------------------

/// [T, F] -> [1, T, F] view copy (adds the channel axis for conv input).
inline Var unsqueeze_channel(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require(av.rank() == 2, "unsqueeze_channel: rank-2 input expected");
  Tensor out({1, av.dim(0), av.dim(1)});
  std::copy(av.data(), av.data() + av.size(), out.data());
  return t.make(std::move(out), t.node(a.id).needs_grad,
                [a](Tape& tp, int self) {
                  if (!tp.node(a.id).needs_grad) return;
                  detail::accumulate(tp.grad(a), tp.grad(self));
                });
}

/// [C, T, F] -> [T, C*F]: flattens channels and frequency per timestep.
inline Var conv_to_time_major(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require(av.rank() == 3, "conv_to_time_major: rank-3 input expected");
  const auto C = av.dim(0), T = av.dim(1), F = av.dim(2);
  Tensor out({T, C * F});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t tt = 0; tt < T; ++tt)
      std::copy(av.data() + (c * T + tt) * F, av.data() + (c * T + tt + 1) * F,
                out.data() + tt * C * F + c * F);
  return t.make(std::move(out), t.node(a.id).needs_grad,
                [a, C, T, F](Tape& tp, int self) {
                  if (!tp.node(a.id).needs_grad) return;
                  const Tensor& g = tp.grad(self);
                  Tensor& ga = tp.grad(a);
                  for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t tt = 0; tt < T; ++tt)
                      for (std::size_t f = 0; f < F; ++f)
                        ga[(c * T + tt) * F + f] +=
                            g[tt * C * F + c * F + f];
                });
}

// ---------------------------------------------------------------------------
// 2-D convolution (time x frequency), stride 1, zero padding preserving shape
// ---------------------------------------------------------------------------

namespace detail {

/// Gathers [T*F, C_in*kt*kf] patches with zero padding (kt/2, kf/2).
inline void im2col(const Tensor& x, std::size_t kt, std::size_t kf,
                   Tensor& cols) {
  const auto C = x.dim(0), T = x.dim(1), F = x.dim(2);
  const std::size_t K = C * kt * kf;
  const int pt = static_cast<int>(kt / 2), pf = static_cast<int>(kf / 2);
  cols = Tensor({T * F, K});
  double* out = cols.data();
  for (std::size_t tt = 0; tt < T; ++tt) {
    for (std::size_t ff = 0; ff < F; ++ff) {
      double* row = out + (tt * F + ff) * K;
      std::size_t idx = 0;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t dt = 0; dt < kt; ++dt) {
          const int st = static_cast<int>(tt) + static_cast<int>(dt) - pt;
          for (std::size_t df = 0; df < kf; ++df, ++idx) {
            const int sf = static_cast<int>(ff) + static_cast<int>(df) - pf;
            row[idx] = (st >= 0 && st < static_cast<int>(T) && sf >= 0 &&
                        sf < static_cast<int>(F))
                           ? x.at(c, static_cast<std::size_t>(st),
                                  static_cast<std::size_t>(sf))
                           : 0.0;
          }
        }
      }
    }
  }
}

/// Scatter-adds [T*F, C_in*kt*kf] patch gradients back onto [C, T, F].
inline void col2im_add(const Tensor& dcols, std::size_t C, std::size_t T,
                       std::size_t F, std::size_t kt, std::size_t kf,
                       Tensor& dx) {
  const std::size_t K = C * kt * kf;
  const int pt = static_cast<int>(kt / 2), pf = static_cast<int>(kf / 2);
  for (std::size_t tt = 0; tt < T; ++tt) {
    for (std::size_t ff = 0; ff < F; ++ff) {
      const double* row = dcols.data() + (tt * F + ff) * K;
      std::size_t idx = 0;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t dt = 0; dt < kt; ++dt) {
          const int st = static_cast<int>(tt) + static_cast<int>(dt) - pt;
          for (std::size_t df = 0; df < kf; ++df, ++idx) {
            const int sf = static_cast<int>(ff) + static_cast<int>(df) - pf;
            if (st >= 0 && st < static_cast<int>(T) && sf >= 0 &&
                sf < static_cast<int>(F))
              dx.at(c, static_cast<std::size_t>(st),
                    static_cast<std::size_t>(sf)) += row[idx];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// x: [C_in, T, F]; w: [C_out, C_in, kt, kf] (odd kernel extents);
/// b: [C_out]. Output [C_out, T, F]. The patch matrix is recomputed in the
/// backward pass to bound activation memory.
inline Var conv2d(Var x, Var w, Var b) {
  Tape& t = detail::same_tape(x, w);
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  require(xv.rank() == 3 && wv.rank() == 4, "conv2d: bad ranks");
  require(wv.dim(1) == xv.dim(0), "conv2d: channel mismatch");
  const auto Cout = wv.dim(0), Cin = xv.dim(0), T = xv.dim(1), F = xv.dim(2);
  const auto kt = wv.dim(2), kf = wv.dim(3);
  require(kt % 2 == 1 && kf % 2 == 1, "conv2d: kernel extents must be odd");
  require(bv.rank() == 1 && bv.dim(0) == Cout, "conv2d: bad bias");
  const std::size_t K = Cin * kt * kf;

  Tensor cols;
  detail::im2col(xv, kt, kf, cols);
  Tensor res({T * F, Cout});
  // res = cols [T*F x K] * W^T [K x Cout]
  MatMap(res.data(), T * F, Cout).noalias() =
      ConstMatMap(cols.data(), T * F, K) *
      ConstMatMap(wv.data(), Cout, K).transpose();
  Tensor out({Cout, T, F});
  for (std::size_t c = 0; c < Cout; ++c) {
    const double bias = bv[c];
    for (std::size_t p = 0; p < T * F; ++p)
      out[c * T * F + p] = res[p * Cout + c] + bias;
  }

  bool ng = t.node(x.id).needs_grad || t.node(w.id).needs_grad ||
            t.node(b.id).needs_grad;
  return t.make(
      std::move(out), ng, [x, w, b, Cout, Cin, T, F, kt, kf, K](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor gres({T * F, Cout});
        for (std::size_t c = 0; c < Cout; ++c)
          for (std::size_t p = 0; p < T * F; ++p)
            gres[p * Cout + c] = g[c * T * F + p];
        if (tp.node(b.id).needs_grad) {
          Tensor& gb = tp.grad(b);
          for (std::size_t c = 0; c < Cout; ++c) {
            double s = 0.0;
            for (std::size_t p = 0; p < T * F; ++p) s += g[c * T * F + p];
            gb[c] += s;
          }
        }
        if (tp.node(w.id).needs_grad) {
          Tensor cols;
          detail::im2col(tp.value(x), kt, kf, cols);
          // dW [Cout x K] += gres^T [Cout x T*F] * cols [T*F x K]
          MatMap(tp.grad(w).data(), Cout, K).noalias() +=
              ConstMatMap(gres.data(), T * F, Cout).transpose() *
              ConstMatMap(cols.data(), T * F, K);
        }
        if (tp.node(x.id).needs_grad) {
          Tensor dcols({T * F, K});
          MatMap(dcols.data(), T * F, K).noalias() =
              ConstMatMap(gres.data(), T * F, Cout) *
              ConstMatMap(tp.value(w).data(), Cout, K);
          detail::col2im_add(dcols, Cin, T, F, kt, kf, tp.grad(x));
        }
      });
}

// ---------------------------------------------------------------------------
// Channel normalization over the (T, F) extent of one sample
// ---------------------------------------------------------------------------

/// Normalizes each channel over its time-frequency extent. Running buffers
/// hold exponential moving averages for evaluation mode. Statistics are
/// per-sample so batch members can be processed on independent tapes; the
/// observed moments are recorded on the tape for the trainer to merge.
inline Var batchnorm_2d(Var x, Var gamma, Var beta, Parameter& running_mean,
                        Parameter& running_var, bool training,
                        double eps = 1e-5) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require(xv.rank() == 3, "batchnorm_2d: rank-3 input expected");
  const auto C = xv.dim(0), T = xv.dim(1), F = xv.dim(2);
  const std::size_t N = T * F;
  const Tensor& gv = t.value(gamma);
  const Tensor& bv = t.value(beta);
  require(gv.dim(0) == C && bv.dim(0) == C, "batchnorm_2d: bad affine shape");

  Tensor mean({C}), var({C});
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = xv.data() + c * N;
      double m = 0.0;
      for (std::size_t i = 0; i < N; ++i) m += p[i];
      m /= static_cast<double>(N);
      double v = 0.0;
      for (std::size_t i = 0; i < N; ++i) v += (p[i] - m) * (p[i] - m);
      v /= static_cast<double>(N);
      mean[c] = m;
      var[c] = v;
    }
    Tensor run_var = var;
    if (N > 1) {
      const double unbias = static_cast<double>(N) / static_cast<double>(N - 1);
      for (std::size_t c = 0; c < C; ++c) run_var[c] *= unbias;
    }
    t.batch_stats.push_back(
        BatchStat{&running_mean, &running_var, mean, run_var});
  } else {
    mean = running_mean.value;
    var = running_var.value;
  }

  Tensor out(xv.shape());
  Tensor inv_std({C});
  for (std::size_t c = 0; c < C; ++c) {
    inv_std[c] = 1.0 / std::sqrt(var[c] + eps);
    const double m = mean[c], is = inv_std[c], ga = gv[c], be = bv[c];
    const double* p = xv.data() + c * N;
    double* o = out.data() + c * N;
    for (std::size_t i = 0; i < N; ++i) o[i] = ga * (p[i] - m) * is + be;
  }

  bool ng = t.node(x.id).needs_grad || t.node(gamma.id).needs_grad ||
            t.node(beta.id).needs_grad;
  auto saved_mean = std::make_shared<Tensor>(std::move(mean));
  auto saved_inv = std::make_shared<Tensor>(std::move(inv_std));
  return t.make(
      std::move(out), ng,
      [x, gamma, beta, C, N, training, saved_mean, saved_inv](Tape& tp,
                                                              int self) {
        const Tensor& g = tp.grad(self);
        const Tensor& xv2 = tp.value(x);
        const Tensor& gv2 = tp.value(gamma);
        for (std::size_t c = 0; c < C; ++c) {
          const double m = (*saved_mean)[c], is = (*saved_inv)[c];
          const double* p = xv2.data() + c * N;
          const double* gc = g.data() + c * N;
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t i = 0; i < N; ++i) {
            sum_g += gc[i];
            sum_gx += gc[i] * (p[i] - m) * is;
          }
          if (tp.node(gamma.id).needs_grad) tp.grad(gamma)[c] += sum_gx;
          if (tp.node(beta.id).needs_grad) tp.grad(beta)[c] += sum_g;
          if (tp.node(x.id).needs_grad) {
            double* gx = tp.grad(x).data() + c * N;
            const double ga = gv2[c];
            if (training) {
              const double invN = 1.0 / static_cast<double>(N);
              for (std::size_t i = 0; i < N; ++i) {
                const double xhat = (p[i] - m) * is;
                gx[i] += ga * is *
                         (gc[i] - invN * sum_g - invN * xhat * sum_gx);
              }
            } else {
              for (std::size_t i = 0; i < N; ++i) gx[i] += ga * is * gc[i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Max pooling along the frequency axis, kernel 2 stride 2
// ---------------------------------------------------------------------------

inline Var maxpool_freq2(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require(xv.rank() == 3, "maxpool_freq2: rank-3 input expected");
  const auto C = xv.dim(0), T = xv.dim(1), F = xv.dim(2);
  const std::size_t Fo = F / 2;
  require(Fo >= 1, "maxpool_freq2: frequency axis too small");
  Tensor out({C, T, Fo});
  auto arg = std::make_shared<std::vector<std::uint8_t>>(C * T * Fo);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t tt = 0; tt < T; ++tt)
      for (std::size_t fo = 0; fo < Fo; ++fo) {
        const double a = xv.at(c, tt, 2 * fo);
        const double b = xv.at(c, tt, 2 * fo + 1);
        const bool second = b > a;
        out.at(c, tt, fo) = second ? b : a;
        (*arg)[(c * T + tt) * Fo + fo] = second ? 1 : 0;
      }
  return t.make(std::move(out), t.node(x.id).needs_grad,
                [x, C, T, F, Fo, arg](Tape& tp, int self) {
                  if (!tp.node(x.id).needs_grad) return;
                  const Tensor& g = tp.grad(self);
                  Tensor& gx = tp.grad(x);
                  for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t tt = 0; tt < T; ++tt)
                      for (std::size_t fo = 0; fo < Fo; ++fo) {
                        const std::size_t off =
                            (*arg)[(c * T + tt) * Fo + fo];
                        gx.at(c, tt, 2 * fo + off) += g.at(c, tt, fo);
                      }
                });
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM
// ---------------------------------------------------------------------------

namespace detail {

struct LstmSaved {
  Tensor gates;  // [T, 4H] post-activation, order (i, f, g, o)
  Tensor cells;  // [T, H]
  Tensor hidden; // [T, H]
};

/// One direction over x [T, I]; writes h sequence [T, H].
inline LstmSaved lstm_forward(const Tensor& x, const Tensor& wx,
                              const Tensor& wh, const Tensor& b,
                              bool reverse) {
  const auto T = x.dim(0), I = x.dim(1);
  const auto H = wh.dim(0);
  LstmSaved s{Tensor({T, 4 * H}), Tensor({T, H}), Tensor({T, H})};
  Tensor xproj({T, 4 * H});
  MatMap(xproj.data(), T, 4 * H).noalias() =
      ConstMatMap(x.data(), T, I) * ConstMatMap(wx.data(), I, 4 * H);
  std::vector<double> h_prev(H, 0.0), c_prev(H, 0.0), pre(4 * H);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t tt = reverse ? T - 1 - step : step;
    Eigen::Map<Eigen::RowVectorXd> P(pre.data(), 4 * H);
    P = Eigen::Map<const Eigen::RowVectorXd>(xproj.data() + tt * 4 * H, 4 * H);
    P.noalias() += Eigen::Map<const Eigen::RowVectorXd>(h_prev.data(), H) *
                   ConstMatMap(wh.data(), H, 4 * H);
    P += Eigen::Map<const Eigen::RowVectorXd>(b.data(), 4 * H);
    double* gates = s.gates.data() + tt * 4 * H;
    double* cell = s.cells.data() + tt * H;
    double* hid = s.hidden.data() + tt * H;
    for (std::size_t j = 0; j < H; ++j) {
      const double gi = 1.0 / (1.0 + std::exp(-pre[j]));
      const double gf = 1.0 / (1.0 + std::exp(-pre[H + j]));
      const double gg = std::tanh(pre[2 * H + j]);
      const double go = 1.0 / (1.0 + std::exp(-pre[3 * H + j]));
      const double c = gf * c_prev[j] + gi * gg;
      gates[j] = gi;
      gates[H + j] = gf;
      gates[2 * H + j] = gg;
      gates[3 * H + j] = go;
      cell[j] = c;
      hid[j] = go * std::tanh(c);
    }
    std::copy(cell, cell + H, c_prev.data());
    std::copy(hid, hid + H, h_prev.data());
  }
  return s;
}

/// Gradient for one direction. dh [T, H] is the loss gradient on the hidden
/// sequence; accumulates into dx, dwx, dwh, db.
inline void lstm_backward(const Tensor& x, const Tensor& wx, const Tensor& wh,
                          const LstmSaved& s, bool reverse, const Tensor& dh,
                          Tensor* dx, Tensor* dwx, Tensor* dwh, Tensor* db) {
  const auto T = x.dim(0), I = x.dim(1);
  const auto H = wh.dim(0);
  Tensor dpre_all({T, 4 * H});
  std::vector<double> dh_carry(H, 0.0), dc_carry(H, 0.0), dpre(4 * H);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t tt = reverse ? step : T - 1 - step;
    const double* gates = s.gates.data() + tt * 4 * H;
    const double* cell = s.cells.data() + tt * H;
    const bool first = reverse ? (tt + 1 == T) : (tt == 0);
    const std::size_t tprev = reverse ? tt + 1 : tt - 1;
    for (std::size_t j = 0; j < H; ++j) {
      const double gi = gates[j], gf = gates[H + j], gg = gates[2 * H + j],
                   go = gates[3 * H + j];
      const double tc = std::tanh(cell[j]);
      const double dhj = dh.at(tt, j) + dh_carry[j];
      const double dgo = dhj * tc;
      double dc = dhj * go * (1.0 - tc * tc) + dc_carry[j];
      const double cprev = first ? 0.0 : s.cells.at(tprev, j);
      const double dgi = dc * gg;
      const double dgg = dc * gi;
      const double dgf = dc * cprev;
      dc_carry[j] = dc * gf;
      dpre[j] = dgi * gi * (1.0 - gi);
      dpre[H + j] = dgf * gf * (1.0 - gf);
      dpre[2 * H + j] = dgg * (1.0 - gg * gg);
      dpre[3 * H + j] = dgo * go * (1.0 - go);
    }
    std::copy(dpre.begin(), dpre.end(), dpre_all.data() + tt * 4 * H);
    // dh_{t-1} via Wh^T
    Eigen::Map<Eigen::RowVectorXd>(dh_carry.data(), H).noalias() =
        Eigen::Map<const Eigen::RowVectorXd>(dpre.data(), 4 * H) *
        ConstMatMap(wh.data(), H, 4 * H).transpose();
  }
  if (dx)
    MatMap(dx->data(), T, I).noalias() +=
        ConstMatMap(dpre_all.data(), T, 4 * H) *
        ConstMatMap(wx.data(), I, 4 * H).transpose();
  if (dwx)
    MatMap(dwx->data(), I, 4 * H).noalias() +=
        ConstMatMap(x.data(), T, I).transpose() *
        ConstMatMap(dpre_all.data(), T, 4 * H);
  if (dwh) {
    // rows of h shifted one step toward the sequence start of this direction
    Tensor hprev({T, H});
    for (std::size_t tt = 0; tt < T; ++tt) {
      const bool first = reverse ? (tt + 1 == T) : (tt == 0);
      if (!first) {
        const std::size_t tprev = reverse ? tt + 1 : tt - 1;
        std::copy(s.hidden.data() + tprev * H, s.hidden.data() + (tprev + 1) * H,
                  hprev.data() + tt * H);
      }
    }
    MatMap(dwh->data(), H, 4 * H).noalias() +=
        ConstMatMap(hprev.data(), T, H).transpose() *
        ConstMatMap(dpre_all.data(), T, 4 * H);
  }
  if (db) {
    Eigen::Map<Eigen::RowVectorXd>(db->data(), 4 * H) +=
        ConstMatMap(dpre_all.data(), T, 4 * H).colwise().sum();
  }
}

}  // namespace detail

/// Bidirectional LSTM over x [T, I] -> [T, 2H]. Forward-direction outputs in
/// columns [0, H), reverse-direction in [H, 2H). Gate order (i, f, g, o).
inline Var bilstm(Var x, Var wx_f, Var wh_f, Var b_f, Var wx_b, Var wh_b,
                  Var b_b) {
  Tape& t = *x.tape;
  const Tensor& xv = t.value(x);
  require(xv.rank() == 2, "bilstm: rank-2 input expected");
  const auto T = xv.dim(0);
  const auto H = t.value(wh_f).dim(0);
  require(t.value(wx_f).dim(0) == xv.dim(1) &&
              t.value(wx_f).dim(1) == 4 * H && t.value(b_f).dim(0) == 4 * H,
          "bilstm: bad forward weights");
  require(t.value(wh_b).dim(0) == H && t.value(wx_b).dim(1) == 4 * H,
          "bilstm: bad backward weights");

  auto fw = std::make_shared<detail::LstmSaved>(
      detail::lstm_forward(xv, t.value(wx_f), t.value(wh_f), t.value(b_f),
                           false));
  auto bw = std::make_shared<detail::LstmSaved>(
      detail::lstm_forward(xv, t.value(wx_b), t.value(wh_b), t.value(b_b),
                           true));
  Tensor out({T, 2 * H});
  for (std::size_t tt = 0; tt < T; ++tt) {
    std::copy(fw->hidden.data() + tt * H, fw->hidden.data() + (tt + 1) * H,
              out.data() + tt * 2 * H);
    std::copy(bw->hidden.data() + tt * H, bw->hidden.data() + (tt + 1) * H,
              out.data() + tt * 2 * H + H);
  }

  return t.make(
      std::move(out), true,
      [x, wx_f, wh_f, b_f, wx_b, wh_b, b_b, fw, bw, T, H](Tape& tp, int self) {
        const Tensor& g = tp.grad(self);
        Tensor dh_f({T, H}), dh_b({T, H});
        for (std::size_t tt = 0; tt < T; ++tt)
          for (std::size_t j = 0; j < H; ++j) {
            dh_f.at(tt, j) = g.at(tt, j);
            dh_b.at(tt, j) = g.at(tt, H + j);
          }
        const Tensor& xv2 = tp.value(x);
        Tensor* dx = tp.node(x.id).needs_grad ? &tp.grad(x) : nullptr;
        detail::lstm_backward(xv2, tp.value(wx_f), tp.value(wh_f), *fw, false,
                              dh_f, dx,
                              tp.node(wx_f.id).needs_grad ? &tp.grad(wx_f)
                                                          : nullptr,
                              tp.node(wh_f.id).needs_grad ? &tp.grad(wh_f)
                                                          : nullptr,
                              tp.node(b_f.id).needs_grad ? &tp.grad(b_f)
                                                         : nullptr);
        detail::lstm_backward(xv2, tp.value(wx_b), tp.value(wh_b), *bw, true,
                              dh_b, dx,
                              tp.node(wx_b.id).needs_grad ? &tp.grad(wx_b)
                                                          : nullptr,
                              tp.node(wh_b.id).needs_grad ? &tp.grad(wh_b)
                                                          : nullptr,
                              tp.node(b_b.id).needs_grad ? &tp.grad(b_b)
                                                         : nullptr);
      });
}

}  // namespace amt

#endif  // AMT_NN_HPP
