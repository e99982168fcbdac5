// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

#include "mgt/autodiff.hpp"

namespace mgt {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients against central differences.
///
/// The error for one entry is |analytic - numeric| / max(1, |analytic|,
/// |numeric|); the report carries the maximum over every entry of every
/// non-frozen parameter. Frozen parameters must end with zero gradient.
/// Parameter values are restored and gradients left holding the analytic
/// result. Throws DeterminismError if two evaluations at the same point
/// disagree and ConfigError if `h` is outside [1e-7, 1e-4].
GradCheckReport gradient_check(const LossBuilder& loss, std::span<Parameter* const> params,
                               double h = 1e-5);

}  // namespace mgt
