#include "naslab/diagnostics.hpp"

#include <cmath>
#include <stdexcept>

#include "naslab/rng.hpp"
#include "naslab/tape.hpp"

namespace naslab {

namespace {

struct NodePass {
  std::vector<std::vector<double>> g;  // per-sample dL/d(node output), rescaled to per-sample loss
  std::vector<std::vector<double>> x;  // per-sample feature entering the node
};

int predecessor_of(int node) { return node - 1; }

/// Forward+backward on one batch; extracts per-sample g at `node` of `cell`
/// and the feature entering it from node-1. Params are not mutated.
NodePass node_pass(SuperNet& net, const Batch& batch, int cell, int node) {
  if (node < 1 || node >= net.topo.num_nodes)
    throw std::invalid_argument("node_pass: node index out of range");
  Tape tape;
  ForwardHooks hooks;
  NodeId logits = supernet_forward(tape, net, batch.inputs, &hooks);
  NodeId loss = tape.cross_entropy_logits(logits, batch.labels);
  tape.backward(loss, /*accumulate_params=*/false);

  NodeId nid = hooks.node_ids[std::size_t(cell)][std::size_t(node)];
  NodeId xid = hooks.node_ids[std::size_t(cell)][std::size_t(predecessor_of(node))];
  const Tensor& G = tape.grad(nid);
  const Tensor& X = tape.value(xid);
  std::size_t N = G.shape[0], d = G.shape[1];
  NodePass out;
  out.g.resize(N);
  out.x.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    out.g[i].resize(d);
    out.x[i].resize(d);
    for (std::size_t j = 0; j < d; ++j) {
      // Mean loss puts a 1/N on every per-sample path; undo it so g is the
      // gradient of the per-sample loss.
      out.g[i][j] = G.at(i, j) * double(N);
      out.x[i][j] = X.at(i, j);
    }
  }
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace

std::vector<double> grad_wrt_p(SuperNet& net, int cell, int edge, const Batch& batch) {
  if (edge < 0 || std::size_t(edge) >= net.topo.num_edges())
    throw std::invalid_argument("grad_wrt_p: edge not found");
  Tape tape;
  ForwardHooks hooks;
  NodeId logits = supernet_forward(tape, net, batch.inputs, &hooks);
  NodeId loss = tape.cross_entropy_logits(logits, batch.labels);
  tape.backward(loss, /*accumulate_params=*/false);

  int dst = net.topo.edges[std::size_t(edge)].second;
  NodeId dst_id = hooks.node_ids[std::size_t(cell)][std::size_t(dst)];
  const Tensor& G = tape.grad(dst_id);

  std::vector<double> grad_p(net.op_set.size(), 0.0);
  for (const auto& tr : hooks.edges) {
    if (tr.cell != cell || tr.edge != edge) continue;
    for (std::size_t k = 0; k < tr.op_out.size(); ++k) {
      if (tr.op_out[k] < 0) continue;  // Zero op: grad_p stays exactly 0
      const Tensor& O = tape.value(tr.op_out[k]);
      double acc = 0.0;
      for (std::size_t i = 0; i < G.numel(); ++i) acc += G.data[i] * O.data[i];
      grad_p[k] = acc;
    }
  }
  return grad_p;
}

CorrRecord grad_correlation(SuperNet& net, const Batch& a, const Batch& b,
                            int cell, int node) {
  std::vector<double> alpha_before;
  for (auto& al : net.alphas)
    alpha_before.insert(alpha_before.end(), al.value.data.begin(), al.value.data.end());

  NodePass pa = node_pass(net, a, cell, node);
  NodePass pb = node_pass(net, b, cell, node);

  std::vector<double> alpha_after;
  for (auto& al : net.alphas)
    alpha_after.insert(alpha_after.end(), al.value.data.begin(), al.value.data.end());
  if (alpha_before != alpha_after)
    throw std::runtime_error("grad_correlation: parameter snapshot changed between passes");

  std::size_t N = pa.g.size(), M = pb.g.size();
  double raw = 0.0;
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < M; ++k)
      raw += dot(pa.g[j], pb.g[k]) * dot(pb.x[k], pa.x[j]);
  raw /= double(N) * double(M);

  double na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < N; ++j) na += norm(pa.g[j]) * norm(pa.x[j]);
  for (std::size_t k = 0; k < M; ++k) nb += norm(pb.g[k]) * norm(pb.x[k]);
  na /= double(N);
  nb /= double(M);

  CorrRecord rec;
  rec.cell = cell;
  rec.node = node;
  rec.raw = raw;
  rec.kind = CorrKind::CrossBatch;
  double denom = na * nb;
  double normalized = denom > 0.0 ? raw / denom : 0.0;
  rec.clamp_warning = std::abs(normalized) > 1.0 + 1e-6;
  rec.normalized = std::clamp(normalized, -1.0, 1.0);
  return rec;
}

CorrRecord self_correlation(SuperNet& net, const Batch& batch, int cell, int node) {
  NodePass p = node_pass(net, batch, cell, node);
  std::size_t N = p.g.size();
  double raw = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    double gj = dot(p.g[j], p.g[j]);
    double xj = dot(p.x[j], p.x[j]);
    raw += gj * xj;
  }
  raw /= double(N) * double(N);

  CorrRecord rec;
  rec.cell = cell;
  rec.node = node;
  rec.raw = raw;
  rec.kind = CorrKind::SelfDiagonal;
  rec.normalized = raw > 0.0 ? 1.0 : 0.0;  // raw saturates its own bound
  return rec;
}

DominationReport domination_trace(const GateSeries& series,
                                  const std::vector<OpKind>& op_set) {
  if (series.steps.empty()) throw std::invalid_argument("domination_trace: empty trace");
  DominationReport report;
  std::size_t T = series.steps.size();
  std::size_t E = series.edge_names.size();
  for (std::size_t e = 0; e < E; ++e) {
    DominationReport::EdgeSeries es;
    es.edge = series.edge_names[e];
    auto dominated = [&](std::size_t t) {
      double learnable = 0.0, nonlearnable = 0.0;
      for (std::size_t k = 0; k < op_set.size(); ++k)
        (op_learnable(op_set[k]) ? learnable : nonlearnable) += series.gates[t][e][k];
      return nonlearnable > learnable;
    };
    // Longest dominated suffix.
    std::size_t t = T;
    while (t > 0 && dominated(t - 1)) --t;
    if (t < T) es.dominated_at = series.steps[t];
    report.edges.push_back(std::move(es));
  }
  return report;
}

LinearMixedEdge LinearMixedEdge::from_ops(const std::vector<OpKind>& ops,
                                          const std::vector<double>& gates, int d,
                                          std::uint64_t seed) {
  if (ops.size() != gates.size())
    throw std::invalid_argument("LinearMixedEdge: ops/gates size mismatch");
  LinearMixedEdge e;
  e.d = d;
  e.p = gates;
  Rng rng(seed);
  for (OpKind k : ops) {
    switch (k) {
      case OpKind::Zero:
        e.W.push_back(Tensor::zeros({std::size_t(d), std::size_t(d)}));
        break;
      case OpKind::Skip: {
        Tensor I = Tensor::zeros({std::size_t(d), std::size_t(d)});
        for (int i = 0; i < d; ++i) I.at(std::size_t(i), std::size_t(i)) = 1.0;
        e.W.push_back(std::move(I));
        break;
      }
      case OpKind::Smooth:
        e.W.push_back(smooth_matrix(std::size_t(d)));
        break;
      case OpKind::Lin:
        e.W.push_back(randn(rng, {std::size_t(d), std::size_t(d)}, 1.0 / std::sqrt(double(d))));
        break;
      case OpKind::NonLin:
        throw std::invalid_argument("bias_decomposition_probe: nonlinear op refused");
    }
  }
  return e;
}

namespace {

// out_j = sum_i p_i W_i x_j for every row of X.
std::vector<std::vector<double>> mixed_out(const LinearMixedEdge& e, const Tensor& X,
                                           const std::vector<Tensor>& W) {
  std::size_t N = X.shape[0], d = X.shape[1];
  std::vector<std::vector<double>> out(N, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < e.p.size(); ++i)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += W[i].at(r, c) * X.at(j, c);
        out[j][r] += e.p[i] * acc;
      }
  return out;
}

}  // namespace

ProbeReport bias_decomposition_probe(const LinearMixedEdge& edge,
                                     const ProbeBatch& a, const ProbeBatch& b,
                                     double eta) {
  std::size_t M = a.X.shape[0], N = b.X.shape[0];
  std::size_t d = std::size_t(edge.d);
  std::size_t n_ops = edge.p.size();

  // Per-sample residuals g = out - y (gradient of 0.5*||out - y||^2).
  auto residuals = [&](const ProbeBatch& batch, const std::vector<Tensor>& W) {
    auto out = mixed_out(edge, batch.X, W);
    for (std::size_t j = 0; j < out.size(); ++j)
      for (std::size_t r = 0; r < d; ++r) out[j][r] -= batch.Y.at(j, r);
    return out;
  };

  auto ga = residuals(a, edge.W);
  auto gb = residuals(b, edge.W);

  // dL/dp_i on batch b with residuals frozen: (1/N) sum_j g_j . (W_i x_j).
  auto gate_grads = [&](const std::vector<Tensor>& W) {
    std::vector<double> gp(n_ops, 0.0);
    for (std::size_t i = 0; i < n_ops; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < N; ++j)
        for (std::size_t r = 0; r < d; ++r) {
          double wr = 0.0;
          for (std::size_t c = 0; c < d; ++c) wr += W[i].at(r, c) * b.X.at(j, c);
          acc += gb[j][r] * wr;
        }
      gp[i] = acc / double(N);
    }
    return gp;
  };

  ProbeReport report;
  report.grad_p_before = gate_grads(edge.W);

  // One plain SGD step of every W_i on batch a.
  std::vector<Tensor> W_new = edge.W;
  for (std::size_t i = 0; i < n_ops; ++i)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        double gw = 0.0;
        for (std::size_t k = 0; k < M; ++k) gw += ga[k][r] * a.X.at(k, c);
        W_new[i].at(r, c) -= eta * edge.p[i] / double(M) * gw;
      }
  report.grad_p_after = gate_grads(W_new);

  double raw = 0.0;
  for (std::size_t j = 0; j < N; ++j)
    for (std::size_t k = 0; k < M; ++k) {
      double gg = 0.0, xx = 0.0;
      for (std::size_t r = 0; r < d; ++r) gg += gb[j][r] * ga[k][r];
      for (std::size_t c = 0; c < d; ++c) xx += a.X.at(k, c) * b.X.at(j, c);
      raw += gg * xx;
    }
  raw /= double(N) * double(M);
  report.raw_correlation = raw;

  for (std::size_t i = 0; i < n_ops; ++i) {
    double change = report.grad_p_after[i] - report.grad_p_before[i];
    double predicted = -eta * edge.p[i] * raw;
    report.change.push_back(change);
    report.predicted.push_back(predicted);
    double denom = std::max(std::abs(predicted), 1e-300);
    if (eta == 0.0 || edge.p[i] == 0.0) {
      report.max_rel_error = std::max(report.max_rel_error, std::abs(change));
    } else {
      report.max_rel_error =
          std::max(report.max_rel_error, std::abs(change - predicted) / denom);
    }
  }
  return report;
}

}  // namespace naslab
