#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cdcor/tape.hpp"

namespace cdcor {

// Builds a scalar loss on the given tape from the parameters the tape is bound to.
using LossBuilder = std::function<Var(Tape&)>;

struct BlockGradError {
  std::string name;
  double max_error = 0.0;
  std::size_t worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_error = 0.0;
  std::vector<BlockGradError> blocks;

  bool passed(double tolerance) const { return max_error < tolerance; }
  const BlockGradError& block(std::string_view name) const;
};

// Gradient magnitude below which the comparison switches to absolute error.
inline constexpr double kRelativeErrorFloor = 1e-8;

// Error between an analytic and a numeric derivative: relative to the analytic
// value, or absolute when the analytic value is below kRelativeErrorFloor.
double gradient_error(double analytic, double numeric);

// Compares tape gradients against central differences for every entry of the
// named parameters (all parameters when `names` is empty). `corrupt` lets
// tests perturb the analytic gradients before comparison. `numeric`, when
// set, is the function differenced in place of `loss`.
GradCheckReport finite_diff_check(
    const LossBuilder& loss, ParameterSet& params, double step,
    const std::vector<std::string>& names = {},
    const std::function<void(ParameterSet&)>& corrupt = nullptr,
    const LossBuilder& numeric = nullptr);

// Analytic gradient of the loss for every parameter (accumulators are reset).
void compute_gradients(const LossBuilder& loss, ParameterSet& params);

// Loss value without recording gradients.
double evaluate_loss(const LossBuilder& loss, ParameterSet& params);

}  // namespace cdcor
