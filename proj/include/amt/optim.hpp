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

#ifndef AMT_OPTIM_HPP
#define AMT_OPTIM_HPP

#include <cstdint>
#include <vector>

#include "amt/autograd.hpp"

namespace amt {

/// Adam with bias correction. Moment buffers are indexed by parameter slot
/// so the optimizer state can round-trip through checkpoints.
class Adam {
 public:
  struct Config {
    double lr = 6e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0;  // global L2 norm; 0 disables
  };

  Adam(ParameterStore& store, Config cfg) : store_(&store), cfg_(cfg) {
    m_.reserve(store.count());
    v_.reserve(store.count());
    for (std::size_t i = 0; i < store.count(); ++i) {
      m_.emplace_back(store.at(i).value.shape());
      v_.emplace_back(store.at(i).value.shape());
    }
  }

  void step() {
    ++t_;
    if (cfg_.grad_clip > 0.0) clip_global_norm(cfg_.grad_clip);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < store_->count(); ++i) {
      Parameter& p = store_->at(i);
      if (!p.trainable) continue;
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const double g = p.grad[k];
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        p.value[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::uint64_t step_count() const { return t_; }
  void set_step_count(std::uint64_t t) { t_ = t; }
  Tensor& moment1(std::size_t i) { return m_[i]; }
  Tensor& moment2(std::size_t i) { return v_[i]; }
  const Config& config() const { return cfg_; }

 private:
  void clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (std::size_t i = 0; i < store_->count(); ++i) {
      const Parameter& p = store_->at(i);
      if (!p.trainable) continue;
      for (std::size_t k = 0; k < p.grad.size(); ++k)
        sq += p.grad[k] * p.grad[k];
    }
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < store_->count(); ++i) {
      Parameter& p = store_->at(i);
      if (!p.trainable) continue;
      for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad[k] *= s;
    }
  }

  ParameterStore* store_;
  Config cfg_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace amt

#endif  // AMT_OPTIM_HPP
