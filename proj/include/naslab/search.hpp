#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "naslab/data.hpp"
#include "naslab/diagnostics.hpp"
#include "naslab/optim.hpp"
#include "naslab/supernet.hpp"

namespace naslab {

enum class Level { BiLevel, SingleLevel };

const char* level_name(Level l);

struct SearchConfig {
  Level level = Level::SingleLevel;
  BatchMode batch_mode = BatchMode::SameBatch;
  GateMode gate_mode = GateMode::Sigmoid;
  double lr_w = 0.005;
  double lr_alpha = 3e-4;
  OptKind w_optimizer = OptKind::SgdMomentum;
  OptKind alpha_optimizer = OptKind::Adam;
  double weight_decay_w = 3e-4;
  // Resolved by validate(): sigmoid -> 0, softmax -> 1e-3 unless set.
  std::optional<double> weight_decay_alpha;
  int epochs = 50;
  int batch_size = 64;
  std::uint64_t seed = 0;
  double xi = 0.0;  // first-order only; from_json rejects nonzero values
  int record_every = 10;
  bool diagnostics = false;

  // Search-space shape; d_in/n_classes come from the dataset.
  int num_nodes = 4;
  int num_cells = 3;
  int d = 16;
  std::vector<OpKind> op_set = {OpKind::Zero, OpKind::Skip, OpKind::Smooth,
                                OpKind::Lin, OpKind::NonLin};

  double resolved_weight_decay_alpha() const {
    if (weight_decay_alpha) return *weight_decay_alpha;
    return gate_mode == GateMode::Sigmoid ? 0.0 : 1e-3;
  }
  /// Throws std::invalid_argument on invariant violations
  /// (SingleLevel requires SameBatch, BiLevel forbids it).
  void validate() const;

  nlohmann::ordered_json to_json() const;
  /// Unknown keys are errors.
  static SearchConfig from_json(const nlohmann::json& j);
};

struct StepRecord {
  std::size_t step = 0;
  double lr_w = 0.0;
  double loss_w = 0.0;
  double loss_alpha = 0.0;
  std::vector<std::vector<double>> gates;  // [edge][op]
  std::vector<PTraceRecord> grad_p;        // diagnostics mode only
  std::vector<CorrRecord> corr;            // diagnostics mode only
};

struct SearchTrace {
  std::size_t total_steps = 0;
  std::vector<std::string> edge_names;
  std::vector<std::string> op_names;
  std::vector<StepRecord> steps;
  bool aborted_non_finite = false;

  GateSeries gate_series() const;
};

struct SearchResult {
  Genotype genotype;
  SearchTrace trace;
  std::vector<std::vector<double>> final_gates;
  double nonlearnable_ratio = 0.0;
  std::optional<std::string> advisory;
};

struct StepLosses {
  double loss_w = 0.0;
  double loss_alpha = 0.0;
};

/// First-order bi-level step: alpha moves on batch_alpha first, then w on
/// batch_w (each from the post-alpha snapshot).
StepLosses step_bilevel(SuperNet& net, const BatchPair& pair, Optimizer& w_opt,
                        Optimizer& alpha_opt, double lr_w, double lr_alpha,
                        double wd_w, double wd_alpha);

/// Single-level step: one pass on the shared batch; both parameter groups are
/// updated from gradients taken at the same snapshot.
StepLosses step_single(SuperNet& net, const BatchPair& pair, Optimizer& w_opt,
                       Optimizer& alpha_opt, double lr_w, double lr_alpha,
                       double wd_w, double wd_alpha);

SearchResult run_search(const SearchConfig& config, const SplitDataset& dataset,
                        int d_in, int n_classes);

std::string trace_to_jsonl(const SearchTrace& trace);
SearchTrace trace_from_jsonl(const std::string& text);

std::string advisory_text(double nonlearnable_ratio);

}  // namespace naslab
