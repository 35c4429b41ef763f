#include "naslab/data.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "naslab/rng.hpp"
#include "naslab/tape.hpp"

namespace naslab {

const char* batch_mode_name(BatchMode m) {
  switch (m) {
    case BatchMode::DiffDataset: return "diff-dataset";
    case BatchMode::SameDatasetDiffBatch: return "same-dataset-diff-batch";
    case BatchMode::SameBatch: return "same-batch";
  }
  return "?";
}

Batch Dataset::gather(const std::vector<std::size_t>& idx) const {
  Batch b;
  std::size_t d = inputs.shape[1];
  b.inputs = Tensor::zeros({idx.size(), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(inputs.data.begin() + idx[r] * d, inputs.data.begin() + (idx[r] + 1) * d,
              b.inputs.data.begin() + r * d);
    b.labels.push_back(labels[idx[r]]);
  }
  b.indices = idx;
  return b;
}

namespace {

Genotype random_genotype(const TeacherSpec& spec, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, int(spec.op_set.size()) - 1);
  Genotype g;
  for (std::size_t e = 0; e < spec.topo.num_edges(); ++e) g.ops.push_back(pick(rng));
  return g;
}

bool has_learnable(const TeacherSpec& spec, const Genotype& g) {
  for (int idx : g.ops)
    if (op_learnable(spec.op_set[idx])) return true;
  return false;
}

std::vector<int> label_with(DiscreteNet& net, const Tensor& inputs) {
  Tape tape;
  NodeId logits = discrete_forward(tape, net, inputs);
  const Tensor& L = tape.value(logits);
  std::vector<int> labels(L.shape[0]);
  for (std::size_t i = 0; i < L.shape[0]; ++i) {
    int best = 0;
    for (std::size_t c = 1; c < L.shape[1]; ++c)
      if (L.at(i, c) > L.at(i, best)) best = int(c);
    labels[i] = best;
  }
  return labels;
}

bool balanced(const std::vector<int>& labels, int n_classes) {
  std::vector<std::size_t> count(std::size_t(n_classes), 0);
  for (int l : labels) ++count[std::size_t(l)];
  double n = double(labels.size());
  for (auto c : count) {
    double f = double(c) / n;
    if (f < 1.0 / (2.0 * n_classes) || f > 2.0 / n_classes) return false;
  }
  return true;
}

double max_class_fraction(const std::vector<int>& labels, int n_classes) {
  std::vector<std::size_t> count(std::size_t(n_classes), 0);
  for (int l : labels) ++count[std::size_t(l)];
  std::size_t mx = *std::max_element(count.begin(), count.end());
  return double(mx) / double(labels.size());
}

}  // namespace

TeacherDataset gen_teacher_dataset(const TeacherSpec& spec, std::uint64_t seed) {
  if (spec.noise_std < 0.0)
    throw std::invalid_argument("gen_teacher_dataset: noise_std must be >= 0");
  if (spec.n_samples < 4 * 64)
    throw std::invalid_argument("gen_teacher_dataset: n_samples too small");

  Rng data_rng(derive_seed(seed, 10));
  Tensor inputs = randn(data_rng, {spec.n_samples, std::size_t(spec.d_in)});

  TeacherDataset ds;
  ds.spec = spec;
  ds.seed = seed;

  bool any_learnable = false;
  for (OpKind k : spec.op_set) any_learnable = any_learnable || op_learnable(k);
  if (!any_learnable)
    throw std::invalid_argument("gen_teacher_dataset: op set has no learnable op");

  // Resample the teacher while its label distribution falls outside the
  // balance window; after 10 attempts accept the best-balanced draw unless it
  // is truly degenerate (one class above 90%).
  bool ok = false;
  double best_skew = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
    std::uint64_t tseed = derive_seed(seed, 20 + std::uint64_t(attempt));
    Rng grng(tseed);
    // The genotype draw is conditioned on containing a learnable op.
    Genotype g = random_genotype(spec, grng);
    while (!has_learnable(spec, g)) g = random_genotype(spec, grng);
    DiscreteNet teacher = DiscreteNet::create(spec.topo, spec.op_set, g, spec.num_cells,
                                              spec.d_in, spec.d, spec.n_classes, tseed);
    auto labels = label_with(teacher, inputs);
    double skew = max_class_fraction(labels, spec.n_classes);
    bool in_window = balanced(labels, spec.n_classes);
    if (in_window || skew < best_skew) {
      best_skew = skew;
      ds.teacher_genotype = g;
      ds.teacher_seed = tseed;
      ds.full.labels = std::move(labels);
    }
    ok = in_window;
  }
  if (!ok && best_skew > 0.9)
    throw std::runtime_error("gen_teacher_dataset: degenerate teacher after 10 resamples");

  if (spec.noise_std > 0.0) {
    Rng nrng(derive_seed(seed, 30));
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (double& v : inputs.data) v += noise(nrng);
  }
  ds.full.inputs = std::move(inputs);

  // 50/50 split on a shuffled index order.
  std::vector<std::size_t> order(spec.n_samples);
  std::iota(order.begin(), order.end(), 0);
  Rng srng(derive_seed(seed, 40));
  std::shuffle(order.begin(), order.end(), srng);
  std::size_t half = spec.n_samples / 2;
  std::vector<std::size_t> tr(order.begin(), order.begin() + half);
  std::vector<std::size_t> va(order.begin() + half, order.end());
  auto btr = ds.full.gather(tr);
  auto bva = ds.full.gather(va);
  ds.split.train = {std::move(btr.inputs), std::move(btr.labels)};
  ds.split.valid = {std::move(bva.inputs), std::move(bva.labels)};
  ds.split.split_fraction = 0.5;
  return ds;
}

DiscreteNet teacher_net(const TeacherDataset& ds) {
  return DiscreteNet::create(ds.spec.topo, ds.spec.op_set, ds.teacher_genotype,
                             ds.spec.num_cells, ds.spec.d_in, ds.spec.d,
                             ds.spec.n_classes, ds.teacher_seed);
}

PairSampler::PairSampler(const SplitDataset& split, std::size_t batch_size,
                         BatchMode mode, std::uint64_t seed)
    : split_(&split), batch_size_(batch_size), mode_(mode), rng_(seed) {
  if (batch_size_ > split.train.size() || batch_size_ > split.valid.size())
    throw std::invalid_argument("PairSampler: batch_size exceeds split size");
  w_order_.resize(split.train.size());
  std::iota(w_order_.begin(), w_order_.end(), 0);
  valid_order_.resize(split.valid.size());
  std::iota(valid_order_.begin(), valid_order_.end(), 0);
  std::shuffle(w_order_.begin(), w_order_.end(), rng_);
  std::shuffle(valid_order_.begin(), valid_order_.end(), rng_);
}

std::vector<std::size_t> PairSampler::next_w_indices() {
  if (w_pos_ + batch_size_ > w_order_.size()) {
    std::shuffle(w_order_.begin(), w_order_.end(), rng_);
    w_pos_ = 0;
  }
  std::vector<std::size_t> idx(w_order_.begin() + w_pos_,
                               w_order_.begin() + w_pos_ + batch_size_);
  w_pos_ += batch_size_;
  return idx;
}

BatchPair PairSampler::next() {
  BatchPair pair;
  pair.mode = mode_;
  auto w_idx = next_w_indices();
  pair.w = split_->train.gather(w_idx);

  switch (mode_) {
    case BatchMode::SameBatch:
      pair.alpha = pair.w;
      break;
    case BatchMode::DiffDataset: {
      if (valid_pos_ + batch_size_ > valid_order_.size()) {
        std::shuffle(valid_order_.begin(), valid_order_.end(), rng_);
        valid_pos_ = 0;
      }
      std::vector<std::size_t> idx(valid_order_.begin() + valid_pos_,
                                   valid_order_.begin() + valid_pos_ + batch_size_);
      valid_pos_ += batch_size_;
      pair.alpha = split_->valid.gather(idx);
      break;
    }
    case BatchMode::SameDatasetDiffBatch: {
      // Fresh uniform draw from train minus batch_w, so the pair is
      // disjoint by construction while batch_w keeps epoch coverage.
      std::vector<char> taken(split_->train.size(), 0);
      for (auto i : w_idx) taken[i] = 1;
      std::vector<std::size_t> pool;
      pool.reserve(split_->train.size() - batch_size_);
      for (std::size_t i = 0; i < taken.size(); ++i)
        if (!taken[i]) pool.push_back(i);
      std::shuffle(pool.begin(), pool.end(), rng_);
      pool.resize(batch_size_);
      pair.alpha = split_->train.gather(pool);
      break;
    }
  }
  return pair;
}

}  // namespace naslab
