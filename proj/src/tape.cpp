#include "naslab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace naslab {

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << shape[i] << (i + 1 < shape.size() ? "," : "");
  os << ")";
  return os.str();
}

namespace {

[[noreturn]] void shape_fail(const char* kind, const Tensor& a, const Tensor& b) {
  throw shape_error(std::string(kind) + ": incompatible shapes " + a.shape_str() +
                    " and " + b.shape_str());
}

void check_finite(const char* kind, const Tensor& t) {
  if (!t.all_finite())
    throw numeric_error(std::string(kind) + ": non-finite output");
}

}  // namespace

NodeId Tape::push(Node n) {
  n.grad = Tensor::zeros(n.value.shape);
  check_finite(n.kind, n.value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor v) {
  return push({"const", {}, std::move(v), {}, nullptr, {}});
}

NodeId Tape::leaf(Param& p) {
  return push({"leaf", {}, p.value, {}, &p, {}});
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
    shape_fail("matmul", A, B);
  std::size_t N = A.shape[0], d = A.shape[1], k = B.shape[1];
  Tensor out = Tensor::zeros({N, k});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double aij = A.at(i, j);
      for (std::size_t c = 0; c < k; ++c) out.at(i, c) += aij * B.at(j, c);
    }
  Node n{"matmul", {a, b}, std::move(out), {}, nullptr, {}};
  n.bw = [N, d, k](Tape& t, Node& self) {
    const Tensor& A2 = t.value(self.inputs[0]);
    const Tensor& B2 = t.value(self.inputs[1]);
    Tensor& gA = t.at(self.inputs[0]).grad;
    Tensor& gB = t.at(self.inputs[1]).grad;
    // dA = G B^T, dB = A^T G
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < k; ++c) acc += self.grad.at(i, c) * B2.at(j, c);
        gA.at(i, j) += acc;
      }
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t c = 0; c < k; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) acc += A2.at(i, j) * self.grad.at(i, c);
        gB.at(j, c) += acc;
      }
  };
  return push(std::move(n));
}

NodeId Tape::matvec(NodeId m, NodeId v) {
  const Tensor& M = value(m);
  const Tensor& V = value(v);
  if (M.rank() != 2 || V.rank() != 1 || M.shape[1] != V.shape[0])
    shape_fail("matvec", M, V);
  std::size_t r = M.shape[0], c = M.shape[1];
  Tensor out = Tensor::zeros({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += M.at(i, j) * V.data[j];
    out.data[i] = acc;
  }
  Node n{"matvec", {m, v}, std::move(out), {}, nullptr, {}};
  n.bw = [r, c](Tape& t, Node& self) {
    const Tensor& M2 = t.value(self.inputs[0]);
    const Tensor& V2 = t.value(self.inputs[1]);
    Tensor& gM = t.at(self.inputs[0]).grad;
    Tensor& gV = t.at(self.inputs[1]).grad;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        gM.at(i, j) += self.grad.data[i] * V2.data[j];
        gV.data[j] += self.grad.data[i] * M2.at(i, j);
      }
  };
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) shape_fail("add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += B.data[i];
  Node n{"add", {a, b}, std::move(out), {}, nullptr, {}};
  n.bw = [](Tape& t, Node& self) {
    for (NodeId in : self.inputs) {
      Tensor& g = t.at(in).grad;
      for (std::size_t i = 0; i < g.numel(); ++i) g.data[i] += self.grad.data[i];
    }
  };
  return push(std::move(n));
}

NodeId Tape::scale(NodeId x, NodeId s) {
  const Tensor& X = value(x);
  const Tensor& S = value(s);
  if (!S.is_scalar()) shape_fail("scale", X, S);
  Tensor out = X;
  double sv = S.data[0];
  for (double& v : out.data) v *= sv;
  Node n{"scale", {x, s}, std::move(out), {}, nullptr, {}};
  n.bw = [](Tape& t, Node& self) {
    const Tensor& X2 = t.value(self.inputs[0]);
    double sv2 = t.value(self.inputs[1]).data[0];
    Tensor& gX = t.at(self.inputs[0]).grad;
    Tensor& gS = t.at(self.inputs[1]).grad;
    double acc = 0.0;
    for (std::size_t i = 0; i < X2.numel(); ++i) {
      gX.data[i] += self.grad.data[i] * sv2;
      acc += self.grad.data[i] * X2.data[i];
    }
    gS.data[0] += acc;
  };
  return push(std::move(n));
}

NodeId Tape::scale_const(NodeId x, double c) {
  Tensor out = value(x);
  for (double& v : out.data) v *= c;
  Node n{"scale_const", {x}, std::move(out), {}, nullptr, {}};
  n.bw = [c](Tape& t, Node& self) {
    Tensor& gX = t.at(self.inputs[0]).grad;
    for (std::size_t i = 0; i < gX.numel(); ++i) gX.data[i] += c * self.grad.data[i];
  };
  return push(std::move(n));
}

NodeId Tape::tanh_op(NodeId x) {
  Tensor out = value(x);
  for (double& v : out.data) v = std::tanh(v);
  Node n{"tanh", {x}, std::move(out), {}, nullptr, {}};
  n.bw = [](Tape& t, Node& self) {
    Tensor& gX = t.at(self.inputs[0]).grad;
    for (std::size_t i = 0; i < gX.numel(); ++i) {
      double y = self.value.data[i];
      gX.data[i] += (1.0 - y * y) * self.grad.data[i];
    }
  };
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  Tensor out = value(x);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  Node n{"relu", {x}, std::move(out), {}, nullptr, {}};
  n.bw = [](Tape& t, Node& self) {
    const Tensor& X2 = t.value(self.inputs[0]);
    Tensor& gX = t.at(self.inputs[0]).grad;
    for (std::size_t i = 0; i < gX.numel(); ++i)
      if (X2.data[i] > 0.0) gX.data[i] += self.grad.data[i];
  };
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId x) {
  Tensor out = value(x);
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  Node n{"sigmoid", {x}, std::move(out), {}, nullptr, {}};
  n.bw = [](Tape& t, Node& self) {
    Tensor& gX = t.at(self.inputs[0]).grad;
    for (std::size_t i = 0; i < gX.numel(); ++i) {
      double y = self.value.data[i];
      gX.data[i] += y * (1.0 - y) * self.grad.data[i];
    }
  };
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId v) {
  const Tensor& V = value(v);
  if (V.rank() != 1) throw shape_error("softmax: expects rank-1, got " + V.shape_str());
  Tensor out = V;
  double mx = *std::max_element(out.data.begin(), out.data.end());
  double sum = 0.0;
  for (double& e : out.data) {
    e = std::exp(e - mx);
    sum += e;
  }
  for (double& e : out.data) e /= sum;
  Node n{"softmax", {v}, std::move(out), {}, nullptr, {}};
  n.bw = [](Tape& t, Node& self) {
    Tensor& gX = t.at(self.inputs[0]).grad;
    double dot = 0.0;
    for (std::size_t i = 0; i < self.value.numel(); ++i)
      dot += self.grad.data[i] * self.value.data[i];
    for (std::size_t i = 0; i < self.value.numel(); ++i)
      gX.data[i] += self.value.data[i] * (self.grad.data[i] - dot);
  };
  return push(std::move(n));
}

NodeId Tape::select(NodeId v, std::size_t i) {
  const Tensor& V = value(v);
  if (V.rank() != 1 || i >= V.shape[0])
    throw shape_error("select: index out of range for " + V.shape_str());
  Node n{"select", {v}, Tensor::scalar(V.data[i]), {}, nullptr, {}};
  n.bw = [i](Tape& t, Node& self) {
    t.at(self.inputs[0]).grad.data[i] += self.grad.data[0];
  };
  return push(std::move(n));
}

NodeId Tape::concat(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.rank() != 1 || B.rank() != 1) shape_fail("concat", A, B);
  Tensor out = Tensor::zeros({A.numel() + B.numel()});
  std::copy(A.data.begin(), A.data.end(), out.data.begin());
  std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.numel());
  Node n{"concat", {a, b}, std::move(out), {}, nullptr, {}};
  std::size_t na = A.numel();
  n.bw = [na](Tape& t, Node& self) {
    Tensor& gA = t.at(self.inputs[0]).grad;
    Tensor& gB = t.at(self.inputs[1]).grad;
    for (std::size_t i = 0; i < gA.numel(); ++i) gA.data[i] += self.grad.data[i];
    for (std::size_t i = 0; i < gB.numel(); ++i) gB.data[i] += self.grad.data[na + i];
  };
  return push(std::move(n));
}

NodeId Tape::mean_over_batch(NodeId x) {
  const Tensor& X = value(x);
  if (X.rank() != 2) throw shape_error("mean_over_batch: expects rank-2, got " + X.shape_str());
  std::size_t N = X.shape[0], d = X.shape[1];
  Tensor out = Tensor::zeros({d});
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < d; ++j) out.data[j] += X.at(i, j) / double(N);
  Node n{"mean_over_batch", {x}, std::move(out), {}, nullptr, {}};
  n.bw = [N, d](Tape& t, Node& self) {
    Tensor& gX = t.at(self.inputs[0]).grad;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < d; ++j)
        gX.at(i, j) += self.grad.data[j] / double(N);
  };
  return push(std::move(n));
}

NodeId Tape::squared_error(NodeId pred, NodeId target) {
  const Tensor& P = value(pred);
  const Tensor& T = value(target);
  if (!P.same_shape(T)) shape_fail("squared_error", P, T);
  std::size_t N = P.rank() == 2 ? P.shape[0] : 1;
  double acc = 0.0;
  for (std::size_t i = 0; i < P.numel(); ++i) {
    double d = P.data[i] - T.data[i];
    acc += 0.5 * d * d;
  }
  Node n{"squared_error", {pred, target}, Tensor::scalar(acc / double(N)), {}, nullptr, {}};
  n.bw = [N](Tape& t, Node& self) {
    const Tensor& P2 = t.value(self.inputs[0]);
    const Tensor& T2 = t.value(self.inputs[1]);
    Tensor& gP = t.at(self.inputs[0]).grad;
    Tensor& gT = t.at(self.inputs[1]).grad;
    double g = self.grad.data[0] / double(N);
    for (std::size_t i = 0; i < P2.numel(); ++i) {
      double d = P2.data[i] - T2.data[i];
      gP.data[i] += g * d;
      gT.data[i] -= g * d;
    }
  };
  return push(std::move(n));
}

NodeId Tape::cross_entropy_logits(NodeId logits, const std::vector<int>& labels) {
  const Tensor& L = value(logits);
  if (L.rank() != 2 || L.shape[0] != labels.size())
    throw shape_error("cross_entropy_logits: logits " + L.shape_str() + " vs " +
                      std::to_string(labels.size()) + " labels");
  std::size_t N = L.shape[0], C = L.shape[1];
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double mx = L.at(i, 0);
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, L.at(i, c));
    double lse = 0.0;
    for (std::size_t c = 0; c < C; ++c) lse += std::exp(L.at(i, c) - mx);
    lse = mx + std::log(lse);
    acc += lse - L.at(i, static_cast<std::size_t>(labels[i]));
  }
  Node n{"cross_entropy_logits", {logits}, Tensor::scalar(acc / double(N)), {}, nullptr, {}};
  n.bw = [N, C, labels](Tape& t, Node& self) {
    const Tensor& L2 = t.value(self.inputs[0]);
    Tensor& gL = t.at(self.inputs[0]).grad;
    double g = self.grad.data[0] / double(N);
    for (std::size_t i = 0; i < N; ++i) {
      double mx = L2.at(i, 0);
      for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, L2.at(i, c));
      double lse = 0.0;
      for (std::size_t c = 0; c < C; ++c) lse += std::exp(L2.at(i, c) - mx);
      for (std::size_t c = 0; c < C; ++c) {
        double p = std::exp(L2.at(i, c) - mx) / lse;
        gL.at(i, c) += g * (p - (static_cast<std::size_t>(labels[i]) == c ? 1.0 : 0.0));
      }
    }
  };
  return push(std::move(n));
}

void Tape::backward(NodeId loss, bool accumulate_params) {
  Node& ln = at(loss);
  if (!ln.value.is_scalar())
    throw shape_error("backward: loss must be scalar, got " + ln.value.shape_str());
  for (auto& n : nodes_)
    std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  ln.grad.data[0] = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.bw) n.bw(*this, n);
  }
  for (auto& n : nodes_) {
    if (!n.grad.all_finite())
      throw numeric_error(std::string(n.kind) + ": non-finite gradient");
    if (n.param && accumulate_params)
      for (std::size_t i = 0; i < n.grad.numel(); ++i)
        n.param->grad.data[i] += n.grad.data[i];
  }
}

}  // namespace naslab
