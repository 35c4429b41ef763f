#include <doctest.h>

#include <cmath>

#include "naslab/data.hpp"
#include "naslab/diagnostics.hpp"
#include "naslab/rng.hpp"
#include "naslab/tape.hpp"

using namespace naslab;

namespace {

const std::vector<OpKind> kAllOps = {OpKind::Zero, OpKind::Skip, OpKind::Smooth,
                                     OpKind::Lin, OpKind::NonLin};

Batch random_batch(std::uint64_t seed, std::size_t n, int d_in, int n_classes) {
  Rng rng(seed);
  Batch b;
  b.inputs = randn(rng, {n, std::size_t(d_in)});
  std::uniform_int_distribution<int> pick(0, n_classes - 1);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(pick(rng));
  return b;
}

std::vector<double> param_snapshot(SuperNet& net) {
  std::vector<double> v;
  for (Param* p : net.all_params())
    v.insert(v.end(), p->value.data.begin(), p->value.data.end());
  return v;
}

}  // namespace

TEST_CASE("gate gradients match autodiff probes on random nets") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SuperNet net = SuperNet::create(CellTopology::complete(3), kAllOps,
                                    seed % 2 ? GateMode::Sigmoid : GateMode::Softmax,
                                    2, 6, 6, 3, seed);
    Batch batch = random_batch(100 + seed, 12, 6, 3);

    for (int cell = 0; cell < 2; ++cell)
      for (int edge = 0; edge < 3; ++edge) {
        auto gp = grad_wrt_p(net, cell, edge, batch);

        // Oracle: unit-valued probe params multiply each op term; their
        // gradient is dL/d(term scale) = gate_k * dL/d p_k, so dividing by
        // the gate recovers the gate gradient.
        Tape tape;
        ForwardHooks hooks;
        hooks.insert_probes = true;
        NodeId logits = supernet_forward(tape, net, batch.inputs, &hooks);
        NodeId loss = tape.cross_entropy_logits(logits, batch.labels);
        tape.backward(loss);

        auto gates = net.gates(std::size_t(edge));
        for (const auto& tr : hooks.edges) {
          if (tr.cell != cell || tr.edge != edge) continue;
          for (std::size_t k = 0; k < tr.probes.size(); ++k) {
            if (!tr.probes[k]) {
              CHECK(gp[k] == 0.0);  // Zero op
              continue;
            }
            double expect = tr.probes[k]->grad.data[0] / gates[k];
            CHECK(std::abs(gp[k] - expect) <= 1e-10 * std::max(1.0, std::abs(expect)));
          }
        }
      }
  }
}

TEST_CASE("skip-only edge gate gradient matches the hand formula") {
  // Single edge 0->1, two nodes, one cell, ops {Zero, Skip}: node1 = p_skip x,
  // so dL/dp_skip = mean_j <dL/d node1_j, x_j>.
  SuperNet net = SuperNet::create(CellTopology::complete(2), {OpKind::Zero, OpKind::Skip},
                                  GateMode::Sigmoid, 1, 3, 3, 2, 7);
  Batch batch = random_batch(8, 2, 3, 2);
  auto gp = grad_wrt_p(net, 0, 0, batch);
  CHECK(gp[0] == 0.0);

  Tape tape;
  ForwardHooks hooks;
  NodeId logits = supernet_forward(tape, net, batch.inputs, &hooks);
  NodeId loss = tape.cross_entropy_logits(logits, batch.labels);
  tape.backward(loss, false);
  const Tensor& G = tape.grad(hooks.node_ids[0][1]);
  const Tensor& X = tape.value(hooks.node_ids[0][0]);
  double expect = 0.0;
  for (std::size_t i = 0; i < G.numel(); ++i) expect += G.data[i] * X.data[i];
  CHECK(gp[1] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("identical single-sample batches give normalized correlation 1") {
  SuperNet net = SuperNet::create(CellTopology::complete(3), kAllOps, GateMode::Softmax,
                                  2, 6, 6, 3, 1);
  Batch b = random_batch(2, 1, 6, 3);
  CorrRecord rec = grad_correlation(net, b, b, 1, 2);
  CHECK(rec.kind == CorrKind::CrossBatch);
  CHECK(rec.raw > 0.0);
  CHECK(rec.normalized == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(!rec.clamp_warning);
}

TEST_CASE("self correlation diagonal is nonnegative and saturates its bound") {
  SuperNet net = SuperNet::create(CellTopology::complete(3), kAllOps, GateMode::Sigmoid,
                                  2, 6, 6, 3, 4);
  Batch b = random_batch(5, 16, 6, 3);
  CorrRecord rec = self_correlation(net, b, 1, 2);
  CHECK(rec.kind == CorrKind::SelfDiagonal);
  CHECK(rec.raw > 0.0);
  CHECK(rec.normalized == 1.0);
}

TEST_CASE("diagnostics never mutate parameters") {
  SuperNet net = SuperNet::create(CellTopology::complete(3), kAllOps, GateMode::Softmax,
                                  2, 6, 6, 3, 9);
  Batch a = random_batch(10, 8, 6, 3), b = random_batch(11, 8, 6, 3);
  auto before = param_snapshot(net);
  grad_wrt_p(net, 1, 2, a);
  grad_correlation(net, a, b, 0, 1);
  self_correlation(net, a, 1, 2);
  CHECK(param_snapshot(net) == before);
}

TEST_CASE("domination detection on constant and rising series") {
  std::vector<OpKind> ops = {OpKind::Zero, OpKind::Lin};
  GateSeries s;
  s.edge_names = {"edge.1<-0"};
  s.steps = {0, 10, 20};

  SUBCASE("persistently dominated from the first step") {
    s.gates = {{{0.9, 0.1}}, {{0.9, 0.1}}, {{0.9, 0.1}}};
    auto rep = domination_trace(s, ops);
    REQUIRE(rep.edges.size() == 1);
    REQUIRE(rep.edges[0].dominated_at.has_value());
    CHECK(*rep.edges[0].dominated_at == 0);
    CHECK(rep.num_dominated() == 1);
  }
  SUBCASE("learnable gate rising past the fixed ops") {
    s.gates = {{{0.9, 0.1}}, {{0.5, 0.6}}, {{0.2, 0.9}}};
    auto rep = domination_trace(s, ops);
    CHECK(!rep.edges[0].dominated_at.has_value());
    CHECK(rep.num_dominated() == 0);
  }
  SUBCASE("late onset reported at the suffix start") {
    s.gates = {{{0.1, 0.9}}, {{0.6, 0.4}}, {{0.7, 0.3}}};
    auto rep = domination_trace(s, ops);
    REQUIRE(rep.edges[0].dominated_at.has_value());
    CHECK(*rep.edges[0].dominated_at == 10);
  }
}

TEST_CASE("domination_trace rejects an empty series") {
  GateSeries s;
  CHECK_THROWS_AS(domination_trace(s, {OpKind::Zero}), std::invalid_argument);
}

TEST_CASE("linear probe refuses nonlinear ops") {
  CHECK_THROWS_AS(LinearMixedEdge::from_ops({OpKind::Lin, OpKind::NonLin},
                                            {0.5, 0.5}, 4, 0),
                  std::invalid_argument);
}

namespace {

ProbeBatch random_probe_batch(std::uint64_t seed, std::size_t n, int d) {
  Rng rng(seed);
  ProbeBatch b;
  b.X = randn(rng, {n, std::size_t(d)});
  b.Y = randn(rng, {n, std::size_t(d)});
  return b;
}

}  // namespace

TEST_CASE("probe with eta 0 measures no change") {
  auto edge = LinearMixedEdge::from_ops({OpKind::Skip, OpKind::Lin, OpKind::Lin},
                                        {0.3, 0.5, 0.2}, 4, 3);
  auto a = random_probe_batch(1, 8, 4), b = random_probe_batch(2, 8, 4);
  ProbeReport rep = bias_decomposition_probe(edge, a, b, 0.0);
  for (double c : rep.change) CHECK(c == 0.0);
  CHECK(rep.max_rel_error == 0.0);
}

TEST_CASE("probe hand case: same single sample, skip-only edge") {
  // One op (Skip, W = I), p = 1, d = 2, batch a = batch b = one sample.
  // g = x - y, raw = ||g||^2 ||x||^2, change = -eta * raw.
  LinearMixedEdge edge = LinearMixedEdge::from_ops({OpKind::Skip}, {1.0}, 2, 0);
  ProbeBatch b;
  b.X = Tensor({1, 2}, {1.0, 2.0});
  b.Y = Tensor({1, 2}, {0.5, -1.0});
  double eta = 0.01;
  ProbeReport rep = bias_decomposition_probe(edge, b, b, eta);

  double g2 = 0.5 * 0.5 + 3.0 * 3.0;
  double x2 = 1.0 + 4.0;
  CHECK(rep.raw_correlation == doctest::Approx(g2 * x2).epsilon(1e-12));
  CHECK(rep.change[0] == doctest::Approx(-eta * g2 * x2).epsilon(1e-9));
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("probe change equals minus eta p raw over random trials") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_real_distribution<double> pd(0.05, 1.0), etad(0.001, 0.05);
    int d = 2 + int(rng() % 15);
    std::vector<OpKind> ops = {OpKind::Skip, OpKind::Smooth, OpKind::Lin, OpKind::Lin};
    std::vector<double> p;
    for (std::size_t i = 0; i < ops.size(); ++i) p.push_back(pd(rng));
    auto edge = LinearMixedEdge::from_ops(ops, p, d, rng());
    auto a = random_probe_batch(rng(), 1 + rng() % 32, d);
    auto b = random_probe_batch(rng(), 1 + rng() % 32, d);
    ProbeReport rep = bias_decomposition_probe(edge, a, b, etad(rng));
    CHECK(rep.max_rel_error < 1e-6);
  }
}

TEST_CASE("cross-batch coupling is much weaker than the same-batch diagonal") {
  auto edge = LinearMixedEdge::from_ops({OpKind::Skip, OpKind::Lin}, {0.5, 0.5}, 16, 12);
  auto a = random_probe_batch(20, 64, 16);
  auto b = random_probe_batch(21, 64, 16);
  double eta = 0.01;
  // Per-pair comparison: the mean diagonal term ||g_j||^2 ||x_j||^2 (probed
  // one sample at a time) against the mean cross-batch pair term, which is
  // what the raw correlation of two disjoint batches averages.
  ProbeReport cross = bias_decomposition_probe(edge, a, b, eta);
  std::size_t n = b.X.shape[0], d = b.X.shape[1];
  double diag_mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    ProbeBatch one;
    one.X = Tensor::zeros({1, d});
    one.Y = Tensor::zeros({1, d});
    for (std::size_t k = 0; k < d; ++k) {
      one.X.at(0, k) = b.X.at(j, k);
      one.Y.at(0, k) = b.Y.at(j, k);
    }
    diag_mean += bias_decomposition_probe(edge, one, one, eta).raw_correlation;
  }
  diag_mean /= double(n);
  CHECK(std::abs(cross.raw_correlation) < 0.1 * diag_mean);
}
