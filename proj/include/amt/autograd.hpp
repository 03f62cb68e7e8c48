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

#ifndef AMT_AUTOGRAD_HPP
#define AMT_AUTOGRAD_HPP

#include <Eigen/Core>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "amt/rng.hpp"
#include "amt/tensor.hpp"

namespace amt {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// Named trainable tensor (or non-trainable buffer, e.g. batch-norm running
/// statistics). Gradient accumulation happens outside the tape so several
/// tapes can run concurrently and merge in a fixed order.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Insertion-ordered parameter registry with stable addresses.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, std::vector<std::size_t> shape,
                    bool trainable = true) {
    if (index_.count(name))
      throw config_error("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Tensor(shape);
    p->grad = Tensor(std::move(shape));
    p->trainable = trainable;
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Parameter* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }

  std::size_t count() const { return params_.size(); }
  Parameter& at(std::size_t i) { return *params_[i]; }
  const Parameter& at(std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->grad.fill(0.0);
  }

  std::size_t trainable_size() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p->trainable) n += p->value.size();
    return n;
  }

  bool all_finite() const {
    for (const auto& p : params_)
      if (!p->value.all_finite()) return false;
    return true;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a tape node.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

/// Batch-normalization statistics observed during one forward pass; the
/// trainer folds these into the running buffers after the step.
struct BatchStat {
  Parameter* mean_buf;
  Parameter* var_buf;
  Tensor mean;
  Tensor var;
};

/// Define-by-run reverse-mode tape. Construction order is topological, so
/// backward() is a reverse sweep. One tape per forward pass per thread.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first use during backward
    bool needs_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, int)> backward;  // (tape, own id)
  };

  Var constant(Tensor v) {
    nodes_.push_back(Node{std::move(v), {}, false, nullptr, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var leaf(Tensor v, bool needs_grad) {
    nodes_.push_back(Node{std::move(v), {}, needs_grad, nullptr, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  /// Injects a parameter as a leaf. Its gradient is collected per-tape and
  /// merged into Parameter::grad via apply_param_grads().
  Var param(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, p.trainable, &p, nullptr});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var make(Tensor value, bool needs_grad,
           std::function<void(Tape&, int)> backward) {
    nodes_.push_back(
        Node{std::move(value), {}, needs_grad, nullptr, std::move(backward)});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  const Tensor& value(Var v) const { return node(v.id).value; }

  /// Gradient tensor of a node, allocated zero-filled on first access.
  Tensor& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }
  Tensor& grad(Var v) { return grad(v.id); }

  bool has_grad(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.grad.size() == n.value.size() && n.value.size() > 0;
  }

  /// Reverse sweep from a scalar node. `seed` is the incoming gradient
  /// (1/batch_size when averaging per-sample losses outside the tape).
  void backward(Var loss, double seed = 1.0) {
    if (loss.tape != this) throw std::logic_error("backward: foreign var");
    if (node(loss.id).value.size() != 1)
      throw std::logic_error("backward: loss must be scalar");
    grad(loss.id)[0] += seed;
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || !has_grad(id)) continue;
      if (n.backward) n.backward(*this, id);
      if (n.param && n.param->trainable) pending_.emplace_back(id);
    }
  }

  /// Adds this tape's parameter gradients into the store-side accumulators.
  /// Callers invoke this in a fixed order across tapes for determinism.
  void apply_param_grads() {
    for (int id : pending_) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      const Tensor& g = n.grad;
      Tensor& acc = n.param->grad;
      for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
    }
    pending_.clear();
  }

  std::vector<BatchStat> batch_stats;

 private:
  std::deque<Node> nodes_;
  std::vector<int> pending_;
};

inline const Tensor& Var::value() const { return tape->node(id).value; }

namespace detail {

inline void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("vars on different tapes");
  return *a.tape;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.same_shape(bv), "add: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
  return t.make(std::move(out), ng, [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.node(a.id).needs_grad) detail::accumulate(tp.grad(a), g);
    if (tp.node(b.id).needs_grad) detail::accumulate(tp.grad(b), g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.same_shape(bv), "sub: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
  return t.make(std::move(out), ng, [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.node(a.id).needs_grad) detail::accumulate(tp.grad(a), g);
    if (tp.node(b.id).needs_grad) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.same_shape(bv), "mul: shape mismatch");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
  return t.make(std::move(out), ng, [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    const Tensor& av2 = tp.value(a);
    const Tensor& bv2 = tp.value(b);
    if (tp.node(a.id).needs_grad) {
      Tensor& ga = tp.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.node(b.id).needs_grad) {
      Tensor& gb = tp.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return t.make(std::move(out), t.node(a.id).needs_grad,
                [a, c](Tape& tp, int self) {
                  const Tensor& g = tp.grad(self);
                  if (!tp.node(a.id).needs_grad) return;
                  Tensor& ga = tp.grad(a);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += c * g[i];
                });
}

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
          "matmul: incompatible shapes");
  const auto m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  MatMap(out.data(), m, n).noalias() =
      ConstMatMap(av.data(), m, k) * ConstMatMap(bv.data(), k, n);
  bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
  return t.make(std::move(out), ng, [a, b, m, k, n](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    ConstMatMap G(g.data(), m, n);
    if (tp.node(a.id).needs_grad) {
      MatMap(tp.grad(a).data(), m, k).noalias() +=
          G * ConstMatMap(tp.value(b).data(), k, n).transpose();
    }
    if (tp.node(b.id).needs_grad) {
      MatMap(tp.grad(b).data(), k, n).noalias() +=
          ConstMatMap(tp.value(a).data(), m, k).transpose() * G;
    }
  });
}

/// x[m×k] · W[k×n] + row-broadcast bias[n].
inline Var linear(Var x, Var w, Var b) {
  Tape& t = detail::same_tape(x, w);
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(b);
  require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(0),
          "linear: incompatible shapes");
  require(bv.rank() == 1 && bv.dim(0) == wv.dim(1), "linear: bad bias");
  const auto m = xv.dim(0), k = xv.dim(1), n = wv.dim(1);
  Tensor out({m, n});
  MatMap O(out.data(), m, n);
  O.noalias() = ConstMatMap(xv.data(), m, k) * ConstMatMap(wv.data(), k, n);
  O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), n);
  bool ng = t.node(x.id).needs_grad || t.node(w.id).needs_grad ||
            t.node(b.id).needs_grad;
  return t.make(std::move(out), ng, [x, w, b, m, k, n](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    ConstMatMap G(g.data(), m, n);
    if (tp.node(x.id).needs_grad) {
      MatMap(tp.grad(x).data(), m, k).noalias() +=
          G * ConstMatMap(tp.value(w).data(), k, n).transpose();
    }
    if (tp.node(w.id).needs_grad) {
      MatMap(tp.grad(w).data(), k, n).noalias() +=
          ConstMatMap(tp.value(x).data(), m, k).transpose() * G;
    }
    if (tp.node(b.id).needs_grad) {
      Eigen::Map<Eigen::RowVectorXd>(tp.grad(b).data(), n) +=
          G.colwise().sum();
    }
  });
}

inline Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return t.make(std::move(out), t.node(a.id).needs_grad,
                [a](Tape& tp, int self) {
                  if (!tp.node(a.id).needs_grad) return;
                  const Tensor& g = tp.grad(self);
                  const Tensor& y = tp.value(Var{&tp, self});
                  Tensor& ga = tp.grad(a);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                });
}

inline Var tanh(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return t.make(std::move(out), t.node(a.id).needs_grad,
                [a](Tape& tp, int self) {
                  if (!tp.node(a.id).needs_grad) return;
                  const Tensor& g = tp.grad(self);
                  const Tensor& y = tp.value(Var{&tp, self});
                  Tensor& ga = tp.grad(a);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                });
}

inline Var relu(Var a) {
  Tape& t = *a.tape;
  Tensor out = t.value(a);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return t.make(std::move(out), t.node(a.id).needs_grad,
                [a](Tape& tp, int self) {
                  if (!tp.node(a.id).needs_grad) return;
                  const Tensor& g = tp.grad(self);
                  const Tensor& x = tp.value(a);
                  Tensor& ga = tp.grad(a);
                  for (std::size_t i = 0; i < g.size(); ++i)
                    if (x[i] > 0.0) ga[i] += g[i];
                });
}

/// Concatenate two rank-2 tensors along the column (feature) axis.
inline Var concat_cols(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0),
          "concat_cols: row mismatch");
  const auto rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    double* dst = out.data() + r * (ca + cb);
    std::copy(av.data() + r * ca, av.data() + (r + 1) * ca, dst);
    std::copy(bv.data() + r * cb, bv.data() + (r + 1) * cb, dst + ca);
  }
  bool ng = t.node(a.id).needs_grad || t.node(b.id).needs_grad;
  return t.make(std::move(out), ng, [a, b, rows, ca, cb](Tape& tp, int self) {
    const Tensor& g = tp.grad(self);
    if (tp.node(a.id).needs_grad) {
      Tensor& ga = tp.grad(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c)
          ga[r * ca + c] += g[r * (ca + cb) + c];
    }
    if (tp.node(b.id).needs_grad) {
      Tensor& gb = tp.grad(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c)
          gb[r * cb + c] += g[r * (ca + cb) + ca + c];
    }
  });
}

inline Var mean_all(Var a) {
  Tape& t = *a.tape;
  const Tensor& av = t.value(a);
  require(av.size() > 0, "mean_all: empty");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
  const double inv = 1.0 / static_cast<double>(av.size());
  return t.make(Tensor::scalar(s * inv), t.node(a.id).needs_grad,
                [a, inv](Tape& tp, int self) {
                  if (!tp.node(a.id).needs_grad) return;
                  const double g = tp.grad(self)[0] * inv;
                  Tensor& ga = tp.grad(a);
                  for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
                });
}

/// Value passes through; gradient does not.
inline Var stop_gradient(Var a) {
  Tape& t = *a.tape;
  return t.make(t.value(a), false, nullptr);
}

}  // namespace amt

#endif  // AMT_AUTOGRAD_HPP
