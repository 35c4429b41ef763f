#pragma once

#include <cstdint>
#include <vector>

#include "naslab/tensor.hpp"

namespace naslab {

enum class Direction { Ascent, Descent };

/// Softmax-mixture setting with a fixed linear objective l = a . (sum p_i z_i),
/// so the per-step margin is constant and the iteration bound is testable.
struct DynamicsInstance {
  int n = 0;
  int m = 8;
  std::vector<Tensor> z;        // n vectors in R^m
  Tensor a;                     // objective direction
  std::vector<double> alpha0;   // alpha0[leader()] must be maximal
  double eta = 0.0;
  double eps = 0.0;             // target gap, in (0, 1 - 1/n)
  Direction direction = Direction::Ascent;

  /// Validates: strict margin > 0, leader alpha maximal, eps in range.
  /// Throws std::invalid_argument otherwise.
  void validate() const;

  /// Ascent: argmax_i a.z_i; Descent: argmin.
  int leader() const;
  /// a.z_i scores.
  std::vector<double> scores() const;

  static DynamicsInstance random(std::uint64_t seed, int n, double delta_lo,
                                 double delta_hi, double eta_lo, double eta_hi,
                                 double eps, Direction dir, int m = 8);
};

/// Closed-form softmax gradient: d l / d alpha_i = p_i sum_j p_j a.(z_i - z_j).
std::vector<double> softmax_alpha_grad(const DynamicsInstance& inst,
                                       const std::vector<double>& alpha);

/// min over i != leader of the objective-aligned gap.
double margin(const DynamicsInstance& inst);

struct DominateResult {
  std::size_t t_hit = 0;
  double bound = 0.0;
};

class theorem_violation : public std::runtime_error {
 public:
  explicit theorem_violation(const std::string& msg) : std::runtime_error(msg) {}
};

/// Runs alpha steps (ascent adds eta*grad; descent subtracts) until
/// p_leader > 1 - eps; returns the first-hit step and the closed-form bound
/// n ln((1-eps) n) / (eta delta). Throws theorem_violation past 10x bound.
DominateResult iterations_to_dominate(const DynamicsInstance& inst);

/// Per-step series of min_i (alpha_leader - alpha_i); checks the lower bound
/// eta*t*delta/n at every step up to `steps` and throws on violation.
std::vector<double> alpha_gap_trace(const DynamicsInstance& inst, std::size_t steps);

}  // namespace naslab
