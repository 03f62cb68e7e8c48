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

// Test-only oracles. These stay independent of the library code paths they
// check: plain scalar loops, finite differences, exhaustive enumeration.

#ifndef AMT_TESTS_HELPERS_HPP
#define AMT_TESTS_HELPERS_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "amt/autograd.hpp"
#include "amt/rng.hpp"

namespace amt_test {

inline void fill_uniform(amt::Tensor& t, amt::Rng& rng, double lo = -1.0,
                         double hi = 1.0) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
}

/// Central-difference gradient check against backprop for a scalar loss
/// defined over a parameter store. Returns the worst relative error over a
/// sample of parameter entries.
struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

inline GradCheckResult gradcheck(
    amt::ParameterStore& store, const std::function<double()>& loss_fn,
    const std::function<void()>& backward_fn, std::size_t samples_per_param,
    amt::Rng& rng, double step = 1e-6) {
  store.zero_grad();
  backward_fn();
  GradCheckResult res;
  for (std::size_t pi = 0; pi < store.count(); ++pi) {
    amt::Parameter& p = store.at(pi);
    if (!p.trainable || p.value.size() == 0) continue;
    const std::size_t n =
        std::min<std::size_t>(samples_per_param, p.value.size());
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t k = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(p.value.size()) - 1));
      const double saved = p.value[k];
      p.value[k] = saved + step;
      const double lp = loss_fn();
      p.value[k] = saved - step;
      const double lm = loss_fn();
      p.value[k] = saved;
      const double fd = (lp - lm) / (2.0 * step);
      const double bp = p.grad[k];
      const double rel =
          std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), 1e-4});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = p.name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return res;
}

}  // namespace amt_test

#endif  // AMT_TESTS_HELPERS_HPP
