#include "cdcor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cdcor/error.hpp"

namespace cdcor {

const BlockGradError& GradCheckReport::block(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw Error("gradcheck report has no block '" + std::string(name) + "'");
}

double gradient_error(double analytic, double numeric) {
  const double diff = std::abs(analytic - numeric);
  if (std::abs(analytic) < kRelativeErrorFloor) return diff;
  return diff / std::abs(analytic);
}

double evaluate_loss(const LossBuilder& loss, ParameterSet& params) {
  Tape tape(&params);
  return loss(tape).scalar();
}

void compute_gradients(const LossBuilder& loss, ParameterSet& params) {
  params.zero_grad();
  Tape tape(&params);
  tape.backward(loss(tape));
}

GradCheckReport finite_diff_check(const LossBuilder& loss, ParameterSet& params, double step,
                                  const std::vector<std::string>& names,
                                  const std::function<void(ParameterSet&)>& corrupt,
                                  const LossBuilder& numeric) {
  if (!(step > 0.0 && step <= 1e-2)) {
    throw Error("finite_diff_check: step must lie in (0, 1e-2], got " + std::to_string(step));
  }
  const double first = evaluate_loss(loss, params);
  const double second = evaluate_loss(loss, params);
  if (first != second) {
    throw Error("finite_diff_check: loss is not deterministic (" + std::to_string(first) +
                " vs " + std::to_string(second) + ")");
  }

  compute_gradients(loss, params);
  if (corrupt) corrupt(params);

  std::vector<std::size_t> selected;
  if (names.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) selected.push_back(i);
  } else {
    for (const auto& n : names) selected.push_back(params.index_of(n));
  }

  const LossBuilder& differenced = numeric ? numeric : loss;
  GradCheckReport report;
  for (std::size_t pid : selected) {
    Parameter& p = params[pid];
    const Matrix analytic = p.grad;
    BlockGradError block{p.name};
    for (std::size_t e = 0; e < p.value.size(); ++e) {
      const double saved = p.value[e];
      p.value[e] = saved + step;
      const double up = evaluate_loss(differenced, params);
      p.value[e] = saved - step;
      const double down = evaluate_loss(differenced, params);
      p.value[e] = saved;
      const double estimate = (up - down) / (2.0 * step);
      const double err = gradient_error(analytic[e], estimate);
      if (e == 0 || err > block.max_error) {
        block.max_error = err;
        block.worst_entry = e;
        block.analytic = analytic[e];
        block.numeric = estimate;
      }
    }
    report.max_error = std::max(report.max_error, block.max_error);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace cdcor
