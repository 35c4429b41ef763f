#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "naslab/param.hpp"
#include "naslab/tape.hpp"

namespace naslab {

enum class OpKind { Zero, Skip, Smooth, Lin, NonLin };

const char* op_name(OpKind k);
std::optional<OpKind> op_from_name(const std::string& name);
bool op_learnable(OpKind k);

enum class GateMode { Softmax, Sigmoid };

/// DAG cell: nodes 0..num_nodes-1, every edge (i, j) with i < j. Edges are
/// kept sorted by (j, i), matching the "edge.j<-i" naming order.
struct CellTopology {
  int num_nodes = 4;
  std::vector<std::pair<int, int>> edges;

  static CellTopology complete(int num_nodes);
  std::string edge_name(std::size_t e) const;
  std::size_t num_edges() const { return edges.size(); }
};

/// One op index per topology edge.
struct Genotype {
  std::vector<int> ops;

  bool operator==(const Genotype&) const = default;
  bool operator<(const Genotype& o) const { return ops < o.ops; }

  std::string to_text(const CellTopology& topo, const std::vector<OpKind>& op_set) const;
  std::string to_json(const CellTopology& topo, const std::vector<OpKind>& op_set) const;
  static Genotype from_text(const std::string& text, const CellTopology& topo,
                            const std::vector<OpKind>& op_set);
};

/// Width-3 circular moving average, row-stochastic, the fixed non-learnable
/// smoothing op.
Tensor smooth_matrix(std::size_t d);

/// Softmax mode: i.i.d. Gaussian(0, 1e-3). Sigmoid mode: every entry
/// -ln(n_ops - 1) so each gate starts at 1/n_ops.
Tensor init_alphas(GateMode mode, int n_ops, std::uint64_t seed);

std::vector<double> activate_gates(GateMode mode, const Tensor& alpha);

/// Weight set for one op instance: empty for non-learnable kinds, one d x d
/// matrix for Lin, two for NonLin (tanh between them).
struct OpWeights {
  std::vector<Param> mats;
};

struct SuperNet {
  CellTopology topo;
  std::vector<OpKind> op_set;
  GateMode gate_mode = GateMode::Softmax;
  int num_cells = 3;
  int d_in = 16, d = 16, n_classes = 4;

  std::vector<Param> alphas;  // one vector per edge, shared across cells
  std::vector<std::vector<std::vector<OpWeights>>> weights;  // [cell][edge][op]
  Param stem;  // d_in x d
  Param head;  // d x n_classes

  static SuperNet create(CellTopology topo, std::vector<OpKind> op_set,
                         GateMode gate_mode, int num_cells, int d_in, int d,
                         int n_classes, std::uint64_t seed);

  std::vector<double> gates(std::size_t edge) const;
  std::vector<std::vector<double>> all_gates() const;

  std::vector<Param*> alpha_params();
  std::vector<Param*> weight_params();
  std::vector<Param*> all_params();

  /// Per edge, argmax over gate values; ties break to the lowest op index.
  Genotype derive_genotype() const;
  double nonlearnable_ratio(const Genotype& g) const;
};

/// Per-forward bookkeeping for diagnostics. When `insert_probes` is set, each
/// non-zero op term is multiplied by a unit-valued probe Param whose gradient
/// after backward equals dL/d(gate_k) along that single term.
struct ForwardHooks {
  struct EdgeTrace {
    int cell;
    int edge;
    NodeId gate_vec;
    std::vector<NodeId> op_out;    // -1 for Zero
    std::vector<Param*> probes;    // nullptr unless insert_probes
  };
  std::vector<std::vector<NodeId>> node_ids;  // [cell][node]
  std::vector<EdgeTrace> edges;
  bool insert_probes = false;
  std::deque<Param> probe_storage;
};

/// One mixed edge: sum_k gate_k * op_k(x). The Zero op contributes no term
/// but its alpha entry still participates through the gate activation.
NodeId mixed_edge_forward(Tape& tape, NodeId x, NodeId gate_vec,
                          const std::vector<OpKind>& op_set,
                          std::vector<OpWeights>* op_weights, int d,
                          ForwardHooks* hooks, ForwardHooks::EdgeTrace* trace);

/// Full supernet pass: stem -> cells -> head logits. `forced_gates`, when
/// given, replaces the activated alpha vector per edge with fixed constants
/// (used for one-hot consistency checks).
NodeId supernet_forward(Tape& tape, SuperNet& net, const Tensor& batch_inputs,
                        ForwardHooks* hooks = nullptr,
                        const std::vector<std::vector<double>>* forced_gates = nullptr);

/// Discrete network: exactly one op per edge, gate weight 1.
struct DiscreteNet {
  CellTopology topo;
  std::vector<OpKind> op_set;
  Genotype genotype;
  int num_cells = 3;
  int d_in = 16, d = 16, n_classes = 4;

  std::vector<std::vector<OpWeights>> weights;  // [cell][edge]
  Param stem, head;

  static DiscreteNet create(CellTopology topo, std::vector<OpKind> op_set,
                            Genotype genotype, int num_cells, int d_in, int d,
                            int n_classes, std::uint64_t seed);
  /// Same architecture with weight values copied from the supernet's
  /// per-edge chosen ops.
  static DiscreteNet from_supernet(const SuperNet& net, const Genotype& g);

  std::vector<Param*> params();
};

NodeId discrete_forward(Tape& tape, DiscreteNet& net, const Tensor& batch_inputs);

}  // namespace naslab
