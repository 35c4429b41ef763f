#include "naslab/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "naslab/rng.hpp"

namespace naslab {

std::vector<double> DynamicsInstance::scores() const {
  std::vector<double> s(std::size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < m; ++k) s[std::size_t(i)] += a.data[std::size_t(k)] * z[std::size_t(i)].data[std::size_t(k)];
  return s;
}

int DynamicsInstance::leader() const {
  auto s = scores();
  if (direction == Direction::Ascent)
    return int(std::max_element(s.begin(), s.end()) - s.begin());
  return int(std::min_element(s.begin(), s.end()) - s.begin());
}

double margin(const DynamicsInstance& inst) {
  auto s = inst.scores();
  int star = inst.leader();
  double sign = inst.direction == Direction::Ascent ? 1.0 : -1.0;
  double delta = std::numeric_limits<double>::infinity();
  for (int i = 0; i < inst.n; ++i) {
    if (i == star) continue;
    delta = std::min(delta, sign * (s[std::size_t(star)] - s[std::size_t(i)]));
  }
  return delta;
}

void DynamicsInstance::validate() const {
  if (n < 2) throw std::invalid_argument("dynamics: n must be >= 2");
  if (int(z.size()) != n) throw std::invalid_argument("dynamics: need n vectors");
  for (const auto& v : z)
    if (v.rank() != 1 || int(v.shape[0]) != m)
      throw std::invalid_argument("dynamics: z dimension mismatch");
  if (a.rank() != 1 || int(a.shape[0]) != m)
    throw std::invalid_argument("dynamics: objective dimension mismatch");
  if (int(alpha0.size()) != n) throw std::invalid_argument("dynamics: alpha0 size mismatch");
  if (eta <= 0.0) throw std::invalid_argument("dynamics: eta must be positive");
  if (!(eps > 0.0 && eps < 1.0 - 1.0 / double(n)))
    throw std::invalid_argument("dynamics: eps must lie in (0, 1 - 1/n)");
  double delta = margin(*this);
  if (!(delta > 0.0))
    throw std::invalid_argument("dynamics: margin must be strictly positive");
  int star = leader();
  for (int i = 0; i < n; ++i)
    if (alpha0[std::size_t(i)] > alpha0[std::size_t(star)])
      throw std::invalid_argument("dynamics: leader alpha must be maximal at init");
}

DynamicsInstance DynamicsInstance::random(std::uint64_t seed, int n, double delta_lo,
                                          double delta_hi, double eta_lo, double eta_hi,
                                          double eps, Direction dir, int m) {
  Rng rng(seed);
  DynamicsInstance inst;
  inst.n = n;
  inst.m = m;
  inst.direction = dir;
  inst.eps = eps;
  std::uniform_real_distribution<double> eta_dist(eta_lo, eta_hi);
  inst.eta = eta_dist(rng);
  inst.a = randn(rng, {std::size_t(m)});
  double a2 = 0.0;
  for (double v : inst.a.data) a2 += v * v;

  // Leader sits at score gap >= delta over everyone else; z_i realizes a
  // prescribed score plus noise orthogonal to a.
  std::uniform_real_distribution<double> delta_dist(delta_lo, delta_hi);
  double delta = delta_dist(rng);
  std::uniform_real_distribution<double> extra(0.0, 2.0);
  double sign = dir == Direction::Ascent ? 1.0 : -1.0;
  std::vector<double> score(std::size_t(n), 0.0);
  score[0] = sign * 3.0;  // leader at index 0
  double closest = 0.0;
  for (int i = 1; i < n; ++i) {
    double gap = (i == 1) ? delta : delta + extra(rng);
    score[std::size_t(i)] = score[0] - sign * gap;
    closest = i == 1 ? gap : std::min(closest, gap);
  }
  for (int i = 0; i < n; ++i) {
    Tensor noise = randn(rng, {std::size_t(m)});
    double na = 0.0;
    for (int k = 0; k < m; ++k) na += noise.data[std::size_t(k)] * inst.a.data[std::size_t(k)];
    Tensor zi = Tensor::zeros({std::size_t(m)});
    for (int k = 0; k < m; ++k)
      zi.data[std::size_t(k)] = score[std::size_t(i)] * inst.a.data[std::size_t(k)] / a2 +
                                (noise.data[std::size_t(k)] - na * inst.a.data[std::size_t(k)] / a2);
    inst.z.push_back(std::move(zi));
  }

  inst.alpha0.resize(std::size_t(n));
  std::normal_distribution<double> adist(0.0, 1.0);
  for (auto& v : inst.alpha0) v = adist(rng);
  double mx = *std::max_element(inst.alpha0.begin(), inst.alpha0.end());
  inst.alpha0[0] = mx;  // theorem precondition: leader alpha maximal
  inst.validate();
  return inst;
}

namespace {

std::vector<double> softmax_of(const std::vector<double>& alpha) {
  double mx = *std::max_element(alpha.begin(), alpha.end());
  std::vector<double> p(alpha.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    p[i] = std::exp(alpha[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

std::vector<double> softmax_alpha_grad(const DynamicsInstance& inst,
                                       const std::vector<double>& alpha) {
  auto s = inst.scores();
  auto p = softmax_of(alpha);
  std::vector<double> g(alpha.size(), 0.0);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < alpha.size(); ++j) acc += p[j] * (s[i] - s[j]);
    g[i] = p[i] * acc;
  }
  return g;
}

DominateResult iterations_to_dominate(const DynamicsInstance& inst) {
  inst.validate();
  double delta = margin(inst);
  int star = inst.leader();
  double sign = inst.direction == Direction::Ascent ? 1.0 : -1.0;
  DominateResult res;
  res.bound = double(inst.n) * std::log((1.0 - inst.eps) * double(inst.n)) /
              (inst.eta * delta);

  std::vector<double> alpha = inst.alpha0;
  std::size_t cap = std::size_t(10.0 * std::max(res.bound, 0.0)) + 10;
  for (std::size_t t = 0;; ++t) {
    auto p = softmax_of(alpha);
    if (p[std::size_t(star)] > 1.0 - inst.eps) {
      res.t_hit = t;
      return res;
    }
    if (t >= cap)
      throw theorem_violation("iterations_to_dominate: exceeded 10x bound");
    auto g = softmax_alpha_grad(inst, alpha);
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] += sign * inst.eta * g[i];
  }
}

std::vector<double> alpha_gap_trace(const DynamicsInstance& inst, std::size_t steps) {
  inst.validate();
  double delta = margin(inst);
  int star = inst.leader();
  double sign = inst.direction == Direction::Ascent ? 1.0 : -1.0;
  std::vector<double> alpha = inst.alpha0;
  std::vector<double> series;
  for (std::size_t t = 0; t <= steps; ++t) {
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < inst.n; ++i) {
      if (i == star) continue;
      gap = std::min(gap, alpha[std::size_t(star)] - alpha[std::size_t(i)]);
    }
    double lower = inst.eta * double(t) * delta / double(inst.n);
    if (gap < lower - 1e-9)
      throw theorem_violation("alpha_gap_trace: gap below eta*t*delta/n at step " +
                              std::to_string(t));
    series.push_back(gap);
    auto g = softmax_alpha_grad(inst, alpha);
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] += sign * inst.eta * g[i];
  }
  return series;
}

}  // namespace naslab
