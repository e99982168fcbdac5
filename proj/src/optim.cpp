// SPDX-License-Identifier: Apache-2.0
#include "mgt/optim.hpp"

#include <cmath>

#include "mgt/error.hpp"

namespace mgt {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive, got " + std::to_string(lr));
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be positive");
}

AdamState AdamState::for_params(std::span<Parameter* const> params) {
  AdamState s;
  for (const auto* p : params) {
    s.m.emplace_back(p->value.shape());
    s.v.emplace_back(p->value.shape());
  }
  return s;
}

void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config) {
  config.validate();
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ConfigError("optimizer state does not match parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (p.frozen) continue;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g;
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.value[k] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

void zero_grads(std::span<Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace mgt
