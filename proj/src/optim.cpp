// Copyright 2026 The stainfuse Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stainfuse/optim.hpp"

#include <cmath>
#include <string>

#include "stainfuse/errors.hpp"

namespace stainfuse {

void adam_step(std::span<Tensor> params, AdamState& state, const AdamOptions& options) {
  if (!(options.lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  if (state.step == 0 && state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                        " slots for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size() || state.v[i].size() != params[i].size()) {
      throw ContractError("adam_step: state slot " + std::to_string(i) + " does not match parameter shape " +
                          shape_string(params[i].shape()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].values();
    const auto& g = params[i].node()->grad;
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * gj;
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      values[j] -= options.lr * mhat / (std::sqrt(vhat) + options.eps);
    }
  }
}

}  // namespace stainfuse
