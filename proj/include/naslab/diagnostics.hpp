#pragma once

#include <optional>
#include <string>
#include <vector>

#include "naslab/data.hpp"
#include "naslab/supernet.hpp"

namespace naslab {

struct PTraceRecord {
  std::size_t step;
  int cell;
  std::string edge;
  std::string op;
  double p;
  double grad_p;
};

enum class CorrKind { CrossBatch, SelfDiagonal };

struct CorrRecord {
  std::size_t step = 0;
  int cell = 0;
  int node = 0;
  double raw = 0.0;
  double normalized = 0.0;
  CorrKind kind = CorrKind::CrossBatch;
  bool clamp_warning = false;  // pre-clamp |normalized| exceeded 1 + 1e-6
};

/// Per-op gate gradients on one edge of one cell: the mean over the batch of
/// <dL/d(node output), op_k(node input)>. Cross-entropy loss on the batch
/// labels. Params are left untouched (grads are not accumulated).
std::vector<double> grad_wrt_p(SuperNet& net, int cell, int edge, const Batch& batch);

/// Cross-batch coupling at a cell node: two passes at the same parameter
/// snapshot. g is the per-sample loss gradient at the node output, x the
/// feature entering the node from its immediate predecessor.
CorrRecord grad_correlation(SuperNet& net, const Batch& a, const Batch& b,
                            int cell, int node);

/// Diagonal-only same-batch term: (1/N^2) sum_j |g_j|^2 |x_j|^2. Each
/// diagonal term sits exactly on its Cauchy-Schwarz bound, so `normalized`
/// is raw over that bound (1 whenever raw > 0).
CorrRecord self_correlation(SuperNet& net, const Batch& batch, int cell, int node);

/// Gate-value time series, one entry per recorded step: gates[t][edge][op].
struct GateSeries {
  std::vector<std::size_t> steps;
  std::vector<std::string> edge_names;
  std::vector<std::vector<std::vector<double>>> gates;
};

struct DominationReport {
  struct EdgeSeries {
    std::string edge;
    std::optional<std::size_t> dominated_at;
  };
  std::vector<EdgeSeries> edges;
  std::size_t num_dominated() const {
    std::size_t n = 0;
    for (auto& e : edges) n += e.dominated_at.has_value();
    return n;
  }
};

/// Per edge: first recorded step from which non-learnable gate mass exceeds
/// learnable mass through the end of the series, or none.
DominationReport domination_trace(const GateSeries& series,
                                  const std::vector<OpKind>& op_set);

/// Single mixed edge with exactly linear ops: out = sum_i p_i W_i x. The
/// setting where the one-step gate-gradient decomposition is exact.
struct LinearMixedEdge {
  int d = 0;
  std::vector<double> p;
  std::vector<Tensor> W;  // d x d each, out = W x (column convention)

  /// Builds the linearization of an op list; refuses NonLin.
  static LinearMixedEdge from_ops(const std::vector<OpKind>& ops,
                                  const std::vector<double>& gates, int d,
                                  std::uint64_t seed);
};

struct ProbeBatch {
  Tensor X;  // (N, d)
  Tensor Y;  // (N, d) regression targets
};

struct ProbeReport {
  std::vector<double> grad_p_before;
  std::vector<double> grad_p_after;
  std::vector<double> change;
  std::vector<double> predicted;  // -eta * p_i * raw_correlation
  double raw_correlation = 0.0;
  double max_rel_error = 0.0;
};

/// Measures the change of dL/dp_i on batch_b across one plain SGD step of the
/// W_i on batch_a (squared-error loss, gradients at the node output frozen at
/// the pre-step snapshot) and compares with -eta * p_i * raw correlation.
ProbeReport bias_decomposition_probe(const LinearMixedEdge& edge,
                                     const ProbeBatch& a, const ProbeBatch& b,
                                     double eta);

}  // namespace naslab
