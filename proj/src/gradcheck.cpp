#include "naslab/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace naslab {

namespace {

double eval_loss(const std::function<NodeId(Tape&)>& build) {
  Tape tape;
  NodeId loss = build(tape);
  return tape.value(loss).data[0];
}

}  // namespace

CheckReport finite_diff_check(const std::function<NodeId(Tape&)>& build,
                              std::span<Param* const> params, double tol,
                              double step) {
  // Analytic pass.
  for (Param* p : params) p->zero_grad();
  Tape tape;
  NodeId loss = build(tape);
  tape.backward(loss);

  double base = tape.value(loss).data[0];
  if (eval_loss(build) != base)
    throw std::runtime_error("finite_diff_check: builder is non-deterministic");

  // Central differences cancel to roughly ulp(|loss|) / (2 step); near-zero
  // gradients would otherwise be compared against pure roundoff noise, so the
  // denominator is floored at a noise scale proportional to the loss.
  double noise_floor = std::max(1e-8, std::abs(base) * 1e-4);

  CheckReport report;
  for (Param* p : params) {
    double worst = 0.0;
    for (std::size_t i = 0; i < p->value.numel(); ++i) {
      double saved = p->value.data[i];
      p->value.data[i] = saved + step;
      double up = eval_loss(build);
      p->value.data[i] = saved - step;
      double dn = eval_loss(build);
      p->value.data[i] = saved;
      double fd = (up - dn) / (2.0 * step);
      double an = p->grad.data[i];
      double denom = std::max({std::abs(fd), std::abs(an), noise_floor});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
    report.per_param.push_back({p->tag, worst});
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace naslab
