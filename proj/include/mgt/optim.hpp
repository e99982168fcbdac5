// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mgt/autodiff.hpp"

namespace mgt {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Throws ConfigError unless lr > 0, betas in [0, 1) and eps > 0.
  void validate() const;
};

/// First/second moment buffers, one pair per parameter, in registration order.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState for_params(std::span<Parameter* const> params);
};

/// One bias-corrected Adam update from the gradients currently held in each
/// Parameter. Frozen parameters are skipped and keep their moments at zero.
void adam_step(std::span<Parameter* const> params, AdamState& state, const AdamConfig& config);

void zero_grads(std::span<Parameter* const> params);

}  // namespace mgt
