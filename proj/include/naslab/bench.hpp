#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "naslab/data.hpp"
#include "naslab/supernet.hpp"

namespace naslab {

struct BenchConfig {
  CellTopology topo = CellTopology::complete(3);
  // NonLin rather than Lin: with a linear op the teacher function would be
  // linearly separable and the whole table saturates at the same accuracy.
  std::vector<OpKind> op_set = {OpKind::Zero, OpKind::Skip, OpKind::Smooth, OpKind::NonLin};
  int num_cells = 3;
  int d = 16;
  int train_steps = 400;
  double lr = 0.05;  // cosine-to-zero SGD momentum 0.9
  int batch_size = 64;
  int n_seeds = 1;
  std::uint64_t seed = 0;

  nlohmann::ordered_json to_json() const;
  static BenchConfig from_json(const nlohmann::json& j);
};

struct BenchEntry {
  Genotype genotype;
  double final_train_loss = 0.0;
  double valid_accuracy = 0.0;
  double valid_loss = 0.0;
  bool diverged = false;
};

struct BenchTable {
  BenchConfig config;
  std::string fingerprint;  // hash of config + dataset fingerprint
  std::map<Genotype, BenchEntry> entries;

  std::string to_json() const;
  static BenchTable from_json(const std::string& text);
};

/// Lexicographic over per-edge op indices. Throws when the count would
/// exceed 10^6.
std::vector<Genotype> enumerate_genotypes(const CellTopology& topo, int n_ops);

std::string bench_fingerprint(const BenchConfig& config, std::uint64_t dataset_fp);

/// Trains one genotype from its hash-derived weight seed and evaluates on the
/// valid split.
BenchEntry train_entry(const BenchConfig& config, const Genotype& g,
                       const SplitDataset& data, int d_in, int n_classes);

/// Full table. `resume_from` skips genotypes already present (fingerprints
/// must match). `workers` > 1 parallelizes across genotypes.
BenchTable build_table(const BenchConfig& config, const SplitDataset& data,
                       int d_in, int n_classes, std::uint64_t dataset_fp,
                       int workers = 1, const BenchTable* resume_from = nullptr,
                       const std::function<void(std::size_t, std::size_t)>& progress = {});

/// Fraction of entries with strictly higher valid accuracy; ties share the
/// best tied rank. Diverged entries are excluded from the denominator.
double rank(const BenchTable& table, const Genotype& g);
double rank(const BenchTable& table, const Genotype& g, const std::string& query_fingerprint);

/// Argmax valid accuracy; ties resolve to the lexicographically smallest
/// genotype. Requires a complete table.
Genotype optimal(const BenchTable& table);

}  // namespace naslab
