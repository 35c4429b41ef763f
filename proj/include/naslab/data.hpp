#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "naslab/rng.hpp"
#include "naslab/supernet.hpp"
#include "naslab/tensor.hpp"

namespace naslab {

struct Batch {
  Tensor inputs;  // (B, d_in)
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // into the owning split
};

struct Dataset {
  Tensor inputs;  // (N, d_in)
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
  Batch gather(const std::vector<std::size_t>& idx) const;
};

struct SplitDataset {
  Dataset train;
  Dataset valid;
  double split_fraction = 0.5;
};

enum class BatchMode { DiffDataset, SameDatasetDiffBatch, SameBatch };

const char* batch_mode_name(BatchMode m);

struct BatchPair {
  Batch w;
  Batch alpha;
  BatchMode mode;
};

struct TeacherSpec {
  int d_in = 16;
  int d = 16;
  int n_classes = 4;
  int num_cells = 3;
  CellTopology topo = CellTopology::complete(3);
  // Matches the bench space; NonLin keeps teacher labels nonlinearly separable.
  std::vector<OpKind> op_set = {OpKind::Zero, OpKind::Skip, OpKind::Smooth, OpKind::NonLin};
  double noise_std = 0.0;
  std::size_t n_samples = 4096;
};

struct TeacherDataset {
  TeacherSpec spec;
  std::uint64_t seed = 0;
  Genotype teacher_genotype;
  std::uint64_t teacher_seed = 0;  // weight seed of the accepted teacher draw
  SplitDataset split;
  Dataset full;
};

/// Labels come from the argmax of the teacher's noiseless logits; stored
/// inputs get noise_std Gaussian perturbation after labeling. The teacher
/// genotype is redrawn (up to 10 times) until it contains a learnable op and
/// every class frequency lies in [1/(2C), 2/C].
TeacherDataset gen_teacher_dataset(const TeacherSpec& spec, std::uint64_t seed);

/// Rebuild the teacher network of a generated dataset (weights are
/// reproducible from the recorded teacher seed).
DiscreteNet teacher_net(const TeacherDataset& ds);

/// Emits batch pairs for one of the three pairing modes. batch_w streams
/// cover the train split exactly once per epoch (reshuffled per epoch);
/// batch_alpha placement depends on the mode.
class PairSampler {
 public:
  PairSampler(const SplitDataset& split, std::size_t batch_size, BatchMode mode,
              std::uint64_t seed);

  BatchPair next();
  std::size_t steps_per_epoch() const { return split_->train.size() / batch_size_; }

 private:
  std::vector<std::size_t> next_w_indices();

  const SplitDataset* split_;
  std::size_t batch_size_;
  BatchMode mode_;
  Rng rng_;
  std::vector<std::size_t> w_order_;
  std::size_t w_pos_ = 0;
  std::vector<std::size_t> valid_order_;
  std::size_t valid_pos_ = 0;
};

}  // namespace naslab
