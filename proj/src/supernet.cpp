#include "naslab/supernet.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "naslab/rng.hpp"

namespace naslab {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Zero: return "zero";
    case OpKind::Skip: return "skip";
    case OpKind::Smooth: return "smooth";
    case OpKind::Lin: return "lin";
    case OpKind::NonLin: return "nonlin";
  }
  return "?";
}

std::optional<OpKind> op_from_name(const std::string& name) {
  for (OpKind k : {OpKind::Zero, OpKind::Skip, OpKind::Smooth, OpKind::Lin, OpKind::NonLin})
    if (name == op_name(k)) return k;
  return std::nullopt;
}

bool op_learnable(OpKind k) { return k == OpKind::Lin || k == OpKind::NonLin; }

CellTopology CellTopology::complete(int num_nodes) {
  if (num_nodes < 2) throw std::invalid_argument("topology: need >= 2 nodes");
  CellTopology t;
  t.num_nodes = num_nodes;
  for (int j = 1; j < num_nodes; ++j)
    for (int i = 0; i < j; ++i) t.edges.emplace_back(i, j);
  std::sort(t.edges.begin(), t.edges.end(),
            [](auto& a, auto& b) { return std::pair(a.second, a.first) < std::pair(b.second, b.first); });
  return t;
}

std::string CellTopology::edge_name(std::size_t e) const {
  std::ostringstream os;
  os << "edge." << edges[e].second << "<-" << edges[e].first;
  return os.str();
}

std::string Genotype::to_text(const CellTopology& topo, const std::vector<OpKind>& op_set) const {
  std::ostringstream os;
  for (std::size_t e = 0; e < ops.size(); ++e)
    os << topo.edge_name(e) << "=" << op_name(op_set[ops[e]]) << "\n";
  return os.str();
}

std::string Genotype::to_json(const CellTopology& topo, const std::vector<OpKind>& op_set) const {
  nlohmann::ordered_json edges;
  for (std::size_t e = 0; e < ops.size(); ++e) {
    std::ostringstream key;
    key << topo.edges[e].second << "<-" << topo.edges[e].first;
    edges[key.str()] = op_name(op_set[ops[e]]);
  }
  nlohmann::ordered_json j;
  j["edges"] = edges;
  return j.dump(2);
}

Genotype Genotype::from_text(const std::string& text, const CellTopology& topo,
                             const std::vector<OpKind>& op_set) {
  Genotype g;
  g.ops.assign(topo.num_edges(), -1);
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("genotype: bad line: " + line);
    std::string lhs = line.substr(0, eq), rhs = line.substr(eq + 1);
    auto kind = op_from_name(rhs);
    if (!kind) throw std::runtime_error("genotype: unknown op: " + rhs);
    bool matched = false;
    for (std::size_t e = 0; e < topo.num_edges(); ++e)
      if (lhs == topo.edge_name(e)) {
        auto it = std::find(op_set.begin(), op_set.end(), *kind);
        if (it == op_set.end()) throw std::runtime_error("genotype: op not in op set: " + rhs);
        g.ops[e] = int(it - op_set.begin());
        matched = true;
      }
    if (!matched) throw std::runtime_error("genotype: unknown edge: " + lhs);
  }
  for (int v : g.ops)
    if (v < 0) throw std::runtime_error("genotype: missing edge assignment");
  return g;
}

Tensor smooth_matrix(std::size_t d) {
  Tensor m = Tensor::zeros({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    m.at(i, (i + d - 1) % d) += 1.0 / 3.0;
    m.at(i, i) += 1.0 / 3.0;
    m.at(i, (i + 1) % d) += 1.0 / 3.0;
  }
  return m;
}

Tensor init_alphas(GateMode mode, int n_ops, std::uint64_t seed) {
  if (n_ops < 2) throw std::invalid_argument("init_alphas: n_ops must be >= 2");
  if (mode == GateMode::Sigmoid) {
    Tensor a = Tensor::zeros({std::size_t(n_ops)});
    double v = -std::log(double(n_ops - 1));
    std::fill(a.data.begin(), a.data.end(), v);
    return a;
  }
  Rng rng(seed);
  // Gaussian(0, 1e-3): variance 1e-3.
  return randn(rng, {std::size_t(n_ops)}, std::sqrt(1e-3));
}

std::vector<double> activate_gates(GateMode mode, const Tensor& alpha) {
  std::vector<double> g(alpha.data.size());
  if (mode == GateMode::Softmax) {
    double mx = *std::max_element(alpha.data.begin(), alpha.data.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = std::exp(alpha.data[i] - mx);
      sum += g[i];
    }
    for (double& v : g) v /= sum;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = 1.0 / (1.0 + std::exp(-alpha.data[i]));
  }
  return g;
}

namespace {

OpWeights make_op_weights(OpKind k, int d, Rng& rng, const std::string& tag) {
  OpWeights w;
  double stddev = 1.0 / std::sqrt(double(d));
  if (k == OpKind::Lin) {
    w.mats.emplace_back(randn(rng, {std::size_t(d), std::size_t(d)}, stddev), tag + ".W");
  } else if (k == OpKind::NonLin) {
    w.mats.emplace_back(randn(rng, {std::size_t(d), std::size_t(d)}, stddev), tag + ".W1");
    w.mats.emplace_back(randn(rng, {std::size_t(d), std::size_t(d)}, stddev), tag + ".W2");
  }
  return w;
}

NodeId apply_op(Tape& tape, OpKind k, NodeId x, OpWeights* w, int d) {
  switch (k) {
    case OpKind::Zero:
      return -1;
    case OpKind::Skip:
      return x;
    case OpKind::Smooth:
      // The circular width-3 average matrix is symmetric, so right-applying
      // it to row vectors equals out_row = M * in_row.
      return tape.matmul(x, tape.constant(smooth_matrix(std::size_t(d))));
    case OpKind::Lin:
      return tape.matmul(x, tape.leaf(w->mats[0]));
    case OpKind::NonLin:
      return tape.matmul(tape.tanh_op(tape.matmul(x, tape.leaf(w->mats[0]))),
                         tape.leaf(w->mats[1]));
  }
  return -1;
}

}  // namespace

SuperNet SuperNet::create(CellTopology topo, std::vector<OpKind> op_set,
                          GateMode gate_mode, int num_cells, int d_in, int d,
                          int n_classes, std::uint64_t seed) {
  SuperNet net;
  net.topo = std::move(topo);
  net.op_set = std::move(op_set);
  net.gate_mode = gate_mode;
  net.num_cells = num_cells;
  net.d_in = d_in;
  net.d = d;
  net.n_classes = n_classes;

  int n_ops = int(net.op_set.size());
  for (std::size_t e = 0; e < net.topo.num_edges(); ++e)
    net.alphas.emplace_back(
        init_alphas(gate_mode, n_ops, derive_seed(seed, 1000 + e)),
        "alpha." + net.topo.edge_name(e));

  Rng rng(derive_seed(seed, 1));
  net.weights.resize(std::size_t(num_cells));
  for (int c = 0; c < num_cells; ++c) {
    net.weights[c].resize(net.topo.num_edges());
    for (std::size_t e = 0; e < net.topo.num_edges(); ++e)
      for (OpKind k : net.op_set) {
        std::ostringstream tag;
        tag << "cell" << c << "." << net.topo.edge_name(e) << "." << op_name(k);
        net.weights[c][e].push_back(make_op_weights(k, d, rng, tag.str()));
      }
  }
  Rng srng(derive_seed(seed, 2));
  net.stem = Param(randn(srng, {std::size_t(d_in), std::size_t(d)}, 1.0 / std::sqrt(double(d_in))), "stem");
  net.head = Param(randn(srng, {std::size_t(d), std::size_t(n_classes)}, 1.0 / std::sqrt(double(d))), "head");
  return net;
}

std::vector<double> SuperNet::gates(std::size_t edge) const {
  return activate_gates(gate_mode, alphas[edge].value);
}

std::vector<std::vector<double>> SuperNet::all_gates() const {
  std::vector<std::vector<double>> g;
  for (std::size_t e = 0; e < alphas.size(); ++e) g.push_back(gates(e));
  return g;
}

std::vector<Param*> SuperNet::alpha_params() {
  std::vector<Param*> p;
  for (auto& a : alphas) p.push_back(&a);
  return p;
}

std::vector<Param*> SuperNet::weight_params() {
  std::vector<Param*> p;
  for (auto& cell : weights)
    for (auto& edge : cell)
      for (auto& op : edge)
        for (auto& m : op.mats) p.push_back(&m);
  p.push_back(&stem);
  p.push_back(&head);
  return p;
}

std::vector<Param*> SuperNet::all_params() {
  auto p = weight_params();
  for (auto* a : alpha_params()) p.push_back(a);
  return p;
}

Genotype SuperNet::derive_genotype() const {
  Genotype g;
  for (std::size_t e = 0; e < topo.num_edges(); ++e) {
    auto gv = gates(e);
    int best = 0;
    for (int k = 1; k < int(gv.size()); ++k)
      if (gv[k] > gv[best]) best = k;  // strict: ties keep lowest index
    g.ops.push_back(best);
  }
  return g;
}

double SuperNet::nonlearnable_ratio(const Genotype& g) const {
  int n = 0;
  for (int idx : g.ops)
    if (!op_learnable(op_set[idx])) ++n;
  return double(n) / double(g.ops.size());
}

NodeId mixed_edge_forward(Tape& tape, NodeId x, NodeId gate_vec,
                          const std::vector<OpKind>& op_set,
                          std::vector<OpWeights>* op_weights, int d,
                          ForwardHooks* hooks, ForwardHooks::EdgeTrace* trace) {
  NodeId acc = -1;
  for (std::size_t k = 0; k < op_set.size(); ++k) {
    NodeId out = apply_op(tape, op_set[k], x, op_weights ? &(*op_weights)[k] : nullptr, d);
    if (trace) trace->op_out.push_back(out);
    if (out < 0) {
      if (trace) trace->probes.push_back(nullptr);
      continue;  // Zero: no term, alpha still coupled through the activation
    }
    NodeId term = tape.scale(out, tape.select(gate_vec, k));
    if (hooks && hooks->insert_probes) {
      hooks->probe_storage.emplace_back(Tensor::scalar(1.0), "probe");
      Param& probe = hooks->probe_storage.back();
      term = tape.scale(term, tape.leaf(probe));
      if (trace) trace->probes.push_back(&probe);
    } else if (trace) {
      trace->probes.push_back(nullptr);
    }
    acc = acc < 0 ? term : tape.add(acc, term);
  }
  return acc;
}

namespace {

NodeId cell_forward(Tape& tape, SuperNet& net, int cell, NodeId input,
                    const std::vector<NodeId>& gate_vecs, ForwardHooks* hooks) {
  std::vector<NodeId> nodes(std::size_t(net.topo.num_nodes), -1);
  nodes[0] = input;
  std::size_t N = tape.value(input).shape[0];
  for (int j = 1; j < net.topo.num_nodes; ++j) {
    NodeId acc = -1;
    for (std::size_t e = 0; e < net.topo.num_edges(); ++e) {
      auto [src, dst] = net.topo.edges[e];
      if (dst != j) continue;
      ForwardHooks::EdgeTrace trace;
      trace.cell = cell;
      trace.edge = int(e);
      trace.gate_vec = gate_vecs[e];
      NodeId contrib = mixed_edge_forward(tape, nodes[src], gate_vecs[e], net.op_set,
                                          &net.weights[cell][e], net.d, hooks,
                                          hooks ? &trace : nullptr);
      if (hooks) hooks->edges.push_back(std::move(trace));
      if (contrib >= 0) acc = acc < 0 ? contrib : tape.add(acc, contrib);
    }
    if (acc < 0) acc = tape.constant(Tensor::zeros({N, std::size_t(net.d)}));
    nodes[j] = acc;
  }
  if (hooks) hooks->node_ids.push_back(nodes);
  return nodes.back();
}

}  // namespace

NodeId supernet_forward(Tape& tape, SuperNet& net, const Tensor& batch_inputs,
                        ForwardHooks* hooks,
                        const std::vector<std::vector<double>>* forced_gates) {
  if (batch_inputs.rank() != 2 || int(batch_inputs.shape[1]) != net.d_in)
    throw shape_error("supernet_forward: batch shape " + batch_inputs.shape_str());

  std::vector<NodeId> gate_vecs;
  for (std::size_t e = 0; e < net.topo.num_edges(); ++e) {
    if (forced_gates) {
      gate_vecs.push_back(tape.constant(
          Tensor({net.op_set.size()}, (*forced_gates)[e])));
    } else {
      NodeId a = tape.leaf(net.alphas[e]);
      gate_vecs.push_back(net.gate_mode == GateMode::Softmax ? tape.softmax(a)
                                                             : tape.sigmoid(a));
    }
  }

  NodeId x = tape.matmul(tape.constant(batch_inputs), tape.leaf(net.stem));
  for (int c = 0; c < net.num_cells; ++c)
    x = cell_forward(tape, net, c, x, gate_vecs, hooks);
  return tape.matmul(x, tape.leaf(net.head));
}

DiscreteNet DiscreteNet::create(CellTopology topo, std::vector<OpKind> op_set,
                                Genotype genotype, int num_cells, int d_in, int d,
                                int n_classes, std::uint64_t seed) {
  DiscreteNet net;
  net.topo = std::move(topo);
  net.op_set = std::move(op_set);
  net.genotype = std::move(genotype);
  net.num_cells = num_cells;
  net.d_in = d_in;
  net.d = d;
  net.n_classes = n_classes;

  Rng rng(derive_seed(seed, 3));
  net.weights.resize(std::size_t(num_cells));
  for (int c = 0; c < num_cells; ++c)
    for (std::size_t e = 0; e < net.topo.num_edges(); ++e) {
      OpKind k = net.op_set[net.genotype.ops[e]];
      std::ostringstream tag;
      tag << "cell" << c << "." << net.topo.edge_name(e) << "." << op_name(k);
      net.weights[c].push_back(make_op_weights(k, d, rng, tag.str()));
    }
  Rng srng(derive_seed(seed, 4));
  net.stem = Param(randn(srng, {std::size_t(d_in), std::size_t(d)}, 1.0 / std::sqrt(double(d_in))), "stem");
  net.head = Param(randn(srng, {std::size_t(d), std::size_t(n_classes)}, 1.0 / std::sqrt(double(d))), "head");
  return net;
}

DiscreteNet DiscreteNet::from_supernet(const SuperNet& src, const Genotype& g) {
  DiscreteNet net;
  net.topo = src.topo;
  net.op_set = src.op_set;
  net.genotype = g;
  net.num_cells = src.num_cells;
  net.d_in = src.d_in;
  net.d = src.d;
  net.n_classes = src.n_classes;
  net.weights.resize(std::size_t(src.num_cells));
  for (int c = 0; c < src.num_cells; ++c)
    for (std::size_t e = 0; e < net.topo.num_edges(); ++e)
      net.weights[c].push_back(src.weights[c][e][std::size_t(g.ops[e])]);
  net.stem = src.stem;
  net.head = src.head;
  return net;
}

std::vector<Param*> DiscreteNet::params() {
  std::vector<Param*> p;
  for (auto& cell : weights)
    for (auto& op : cell)
      for (auto& m : op.mats) p.push_back(&m);
  p.push_back(&stem);
  p.push_back(&head);
  return p;
}

NodeId discrete_forward(Tape& tape, DiscreteNet& net, const Tensor& batch_inputs) {
  if (batch_inputs.rank() != 2 || int(batch_inputs.shape[1]) != net.d_in)
    throw shape_error("discrete_forward: batch shape " + batch_inputs.shape_str());
  std::size_t N = batch_inputs.shape[0];
  NodeId x = tape.matmul(tape.constant(batch_inputs), tape.leaf(net.stem));
  for (int c = 0; c < net.num_cells; ++c) {
    std::vector<NodeId> nodes(std::size_t(net.topo.num_nodes), -1);
    nodes[0] = x;
    for (int j = 1; j < net.topo.num_nodes; ++j) {
      NodeId acc = -1;
      for (std::size_t e = 0; e < net.topo.num_edges(); ++e) {
        auto [src, dst] = net.topo.edges[e];
        if (dst != j) continue;
        OpKind k = net.op_set[net.genotype.ops[e]];
        NodeId out = apply_op(tape, k, nodes[src], &net.weights[c][e], net.d);
        if (out >= 0) acc = acc < 0 ? out : tape.add(acc, out);
      }
      if (acc < 0) acc = tape.constant(Tensor::zeros({N, std::size_t(net.d)}));
      nodes[j] = acc;
    }
    x = nodes.back();
  }
  return tape.matmul(x, tape.leaf(net.head));
}

}  // namespace naslab
