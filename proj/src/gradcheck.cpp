// SPDX-License-Identifier: Apache-2.0
#include "mgt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mgt/error.hpp"
#include "mgt/optim.hpp"

namespace mgt {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  return loss(tape).value()[0];
}

}  // namespace

GradCheckReport gradient_check(const LossBuilder& loss, std::span<Parameter* const> params,
                               double h) {
  if (!(h >= 1e-7 && h <= 1e-4)) {
    throw ConfigError("finite-difference step must lie in [1e-7, 1e-4]");
  }
  zero_grads(params);
  {
    Tape tape;
    Var root = loss(tape);
    tape.backward(root);
    if (root.value()[0] != evaluate(loss)) {
      throw DeterminismError("loss differs between two evaluations at the same parameters");
    }
  }

  GradCheckReport report;
  for (auto* p : params) {
    if (p->frozen) {
      if (p->grad.max_abs() != 0.0) {
        throw Error("frozen parameter '" + p->name + "' accumulated a gradient");
      }
      continue;
    }
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      const double orig = p->value[k];
      p->value[k] = orig + h;
      const double up = evaluate(loss);
      p->value[k] = orig - h;
      const double down = evaluate(loss);
      p->value[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[k];
      const double err =
          std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      ++report.entries_checked;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = k;
      }
    }
  }
  return report;
}

}  // namespace mgt
