#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "naslab/param.hpp"
#include "naslab/tape.hpp"

namespace naslab {

struct CheckReport {
  struct Entry {
    std::string tag;
    double max_rel_error;
  };
  std::vector<Entry> per_param;
  double max_rel_error = 0.0;
  bool pass = false;
};

/// Central finite differences (step 1e-5 by default) against tape gradients.
/// `build` must be deterministic in the params: it is evaluated repeatedly
/// with perturbed values. A value mismatch on repeated evaluation at the same
/// point is reported as non-determinism.
CheckReport finite_diff_check(const std::function<NodeId(Tape&)>& build,
                              std::span<Param* const> params, double tol,
                              double step = 1e-5);

}  // namespace naslab
