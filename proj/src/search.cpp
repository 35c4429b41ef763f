#include "naslab/search.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "naslab/rng.hpp"
#include "naslab/tape.hpp"

namespace naslab {

const char* level_name(Level l) {
  return l == Level::BiLevel ? "bi-level" : "single-level";
}

void SearchConfig::validate() const {
  if (level == Level::SingleLevel && batch_mode != BatchMode::SameBatch)
    throw std::invalid_argument("config: single-level requires batch_mode=same-batch");
  if (level == Level::BiLevel && batch_mode == BatchMode::SameBatch)
    throw std::invalid_argument("config: bi-level requires diff-dataset or same-dataset-diff-batch");
  if (epochs < 0 || batch_size < 1) throw std::invalid_argument("config: bad epochs/batch_size");
  if (op_set.size() < 2) throw std::invalid_argument("config: op_set needs >= 2 ops");
  if (num_nodes < 2 || num_cells < 1) throw std::invalid_argument("config: bad topology");
}

namespace {

const char* gate_mode_name(GateMode g) {
  return g == GateMode::Softmax ? "softmax" : "sigmoid";
}
const char* opt_name(OptKind k) {
  return k == OptKind::SgdMomentum ? "sgd-momentum" : "adam";
}

template <typename T>
T parse_enum(const std::string& s, std::initializer_list<std::pair<const char*, T>> table,
             const char* field) {
  for (auto& [name, val] : table)
    if (s == name) return val;
  throw std::invalid_argument(std::string("config: bad value for ") + field + ": " + s);
}

}  // namespace

nlohmann::ordered_json SearchConfig::to_json() const {
  nlohmann::ordered_json j;
  j["level"] = level == Level::BiLevel ? "bi-level" : "single-level";
  j["batch_mode"] = batch_mode_name(batch_mode);
  j["gate_mode"] = gate_mode_name(gate_mode);
  j["lr_w"] = lr_w;
  j["lr_alpha"] = lr_alpha;
  j["w_optimizer"] = opt_name(w_optimizer);
  j["alpha_optimizer"] = opt_name(alpha_optimizer);
  j["weight_decay_w"] = weight_decay_w;
  if (weight_decay_alpha)
    j["weight_decay_alpha"] = *weight_decay_alpha;
  else
    j["weight_decay_alpha"] = nullptr;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["xi"] = xi;
  j["record_every"] = record_every;
  j["diagnostics"] = diagnostics;
  j["num_nodes"] = num_nodes;
  j["num_cells"] = num_cells;
  j["d"] = d;
  std::vector<std::string> ops;
  for (OpKind k : op_set) ops.emplace_back(op_name(k));
  j["op_set"] = ops;
  return j;
}

SearchConfig SearchConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "level", "batch_mode", "gate_mode", "lr_w", "lr_alpha", "w_optimizer",
      "alpha_optimizer", "weight_decay_w", "weight_decay_alpha", "epochs",
      "batch_size", "seed", "xi", "record_every", "diagnostics", "num_nodes",
      "num_cells", "d", "op_set"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw std::invalid_argument("config: unknown key: " + it.key());

  SearchConfig c;
  if (j.contains("level"))
    c.level = parse_enum<Level>(j["level"], {{"bi-level", Level::BiLevel}, {"single-level", Level::SingleLevel}}, "level");
  if (j.contains("batch_mode"))
    c.batch_mode = parse_enum<BatchMode>(j["batch_mode"],
                                         {{"diff-dataset", BatchMode::DiffDataset},
                                          {"same-dataset-diff-batch", BatchMode::SameDatasetDiffBatch},
                                          {"same-batch", BatchMode::SameBatch}},
                                         "batch_mode");
  if (j.contains("gate_mode"))
    c.gate_mode = parse_enum<GateMode>(j["gate_mode"], {{"softmax", GateMode::Softmax}, {"sigmoid", GateMode::Sigmoid}}, "gate_mode");
  if (j.contains("lr_w")) c.lr_w = j["lr_w"].get<double>();
  if (j.contains("lr_alpha")) c.lr_alpha = j["lr_alpha"].get<double>();
  if (j.contains("w_optimizer"))
    c.w_optimizer = parse_enum<OptKind>(j["w_optimizer"], {{"sgd-momentum", OptKind::SgdMomentum}, {"adam", OptKind::Adam}}, "w_optimizer");
  if (j.contains("alpha_optimizer"))
    c.alpha_optimizer = parse_enum<OptKind>(j["alpha_optimizer"], {{"sgd-momentum", OptKind::SgdMomentum}, {"adam", OptKind::Adam}}, "alpha_optimizer");
  if (j.contains("weight_decay_w")) c.weight_decay_w = j["weight_decay_w"].get<double>();
  if (j.contains("weight_decay_alpha") && !j["weight_decay_alpha"].is_null())
    c.weight_decay_alpha = j["weight_decay_alpha"].get<double>();
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("xi") && j["xi"].get<double>() != 0.0)
    throw std::invalid_argument("config: xi must be 0 (second-order is out of scope)");
  if (j.contains("record_every")) c.record_every = j["record_every"].get<int>();
  if (j.contains("diagnostics")) c.diagnostics = j["diagnostics"].get<bool>();
  if (j.contains("num_nodes")) c.num_nodes = j["num_nodes"].get<int>();
  if (j.contains("num_cells")) c.num_cells = j["num_cells"].get<int>();
  if (j.contains("d")) c.d = j["d"].get<int>();
  if (j.contains("op_set")) {
    c.op_set.clear();
    for (const auto& name : j["op_set"]) {
      auto k = op_from_name(name.get<std::string>());
      if (!k) throw std::invalid_argument("config: unknown op: " + name.get<std::string>());
      c.op_set.push_back(*k);
    }
  }
  return c;
}

namespace {

double forward_backward(SuperNet& net, const Batch& batch) {
  Tape tape;
  NodeId logits = supernet_forward(tape, net, batch.inputs);
  NodeId loss = tape.cross_entropy_logits(logits, batch.labels);
  tape.backward(loss);
  double l = tape.value(loss).data[0];
  if (!std::isfinite(l)) throw numeric_error("search: non-finite loss");
  return l;
}

void zero_all(SuperNet& net) {
  for (Param* p : net.all_params()) p->zero_grad();
}

}  // namespace

StepLosses step_bilevel(SuperNet& net, const BatchPair& pair, Optimizer& w_opt,
                        Optimizer& alpha_opt, double lr_w, double lr_alpha,
                        double wd_w, double wd_alpha) {
  StepLosses out;
  zero_all(net);
  out.loss_alpha = forward_backward(net, pair.alpha);
  alpha_opt.step(net.alpha_params(), lr_alpha, wd_alpha);

  zero_all(net);
  out.loss_w = forward_backward(net, pair.w);
  w_opt.step(net.weight_params(), lr_w, wd_w);
  return out;
}

StepLosses step_single(SuperNet& net, const BatchPair& pair, Optimizer& w_opt,
                       Optimizer& alpha_opt, double lr_w, double lr_alpha,
                       double wd_w, double wd_alpha) {
  StepLosses out;
  zero_all(net);
  out.loss_w = out.loss_alpha = forward_backward(net, pair.w);
  // Both groups consume gradients from the shared pre-step snapshot; the
  // application order cannot matter because neither step rereads gradients.
  w_opt.step(net.weight_params(), lr_w, wd_w);
  alpha_opt.step(net.alpha_params(), lr_alpha, wd_alpha);
  return out;
}

GateSeries SearchTrace::gate_series() const {
  GateSeries s;
  s.edge_names = edge_names;
  for (const auto& rec : steps) {
    s.steps.push_back(rec.step);
    s.gates.push_back(rec.gates);
  }
  return s;
}

std::string advisory_text(double ratio) {
  std::ostringstream os;
  os << "nonlearnable_ratio " << ratio
     << " exceeds 0.3: consider decreasing the learning rate and rerunning";
  return os.str();
}

SearchResult run_search(const SearchConfig& config, const SplitDataset& dataset,
                        int d_in, int n_classes) {
  config.validate();
  CellTopology topo = CellTopology::complete(config.num_nodes);
  SuperNet net = SuperNet::create(topo, config.op_set, config.gate_mode,
                                  config.num_cells, d_in, config.d, n_classes,
                                  derive_seed(config.seed, 100));
  PairSampler sampler(dataset, std::size_t(config.batch_size), config.batch_mode,
                      derive_seed(config.seed, 200));

  Optimizer w_opt = config.w_optimizer == OptKind::SgdMomentum ? Optimizer::sgd_momentum()
                                                               : Optimizer::adam();
  Optimizer a_opt = config.alpha_optimizer == OptKind::SgdMomentum
                        ? Optimizer::sgd_momentum()
                        : Optimizer::adam();

  std::size_t steps_per_epoch = sampler.steps_per_epoch();
  std::size_t total = std::size_t(config.epochs) * steps_per_epoch;
  double wd_alpha = config.resolved_weight_decay_alpha();

  SearchResult result;
  result.trace.total_steps = total;
  for (std::size_t e = 0; e < topo.num_edges(); ++e)
    result.trace.edge_names.push_back(topo.edge_name(e));
  for (OpKind k : config.op_set) result.trace.op_names.emplace_back(op_name(k));

  int mid_cell = config.num_cells / 2;
  std::vector<int> diag_cells = {0, mid_cell, config.num_cells - 1};
  int diag_node = config.num_nodes - 1;

  for (std::size_t step = 0; step < total; ++step) {
    BatchPair pair = sampler.next();
    bool record = config.record_every > 0 && step % std::size_t(config.record_every) == 0;

    StepRecord rec;
    if (record) {
      rec.step = step;
      rec.gates = net.all_gates();
      if (config.diagnostics) {
        // Pre-update snapshot diagnostics on this step's batches.
        int last_cell = config.num_cells - 1;
        for (std::size_t edge = 0; edge < topo.num_edges(); ++edge) {
          auto gp = grad_wrt_p(net, last_cell, int(edge), pair.alpha);
          auto gates = net.gates(edge);
          for (std::size_t k = 0; k < config.op_set.size(); ++k)
            rec.grad_p.push_back({step, last_cell, topo.edge_name(edge),
                                  op_name(config.op_set[k]), gates[k], gp[k]});
        }
        for (int cell : diag_cells) {
          CorrRecord cr = config.level == Level::SingleLevel
                              ? self_correlation(net, pair.w, cell, diag_node)
                              : grad_correlation(net, pair.alpha, pair.w, cell, diag_node);
          cr.step = step;
          rec.corr.push_back(cr);
        }
      }
    }

    double lr_w = cosine_lr(step, total, config.lr_w);
    double lr_alpha = config.alpha_optimizer == OptKind::SgdMomentum
                          ? cosine_lr(step, total, config.lr_alpha)
                          : config.lr_alpha;
    StepLosses losses;
    try {
      losses = config.level == Level::BiLevel
                   ? step_bilevel(net, pair, w_opt, a_opt, lr_w, lr_alpha,
                                  config.weight_decay_w, wd_alpha)
                   : step_single(net, pair, w_opt, a_opt, lr_w, lr_alpha,
                                 config.weight_decay_w, wd_alpha);
    } catch (const numeric_error&) {
      result.trace.aborted_non_finite = true;
      if (record) result.trace.steps.push_back(std::move(rec));
      break;
    }
    if (record) {
      rec.lr_w = lr_w;
      rec.loss_w = losses.loss_w;
      rec.loss_alpha = losses.loss_alpha;
      result.trace.steps.push_back(std::move(rec));
    }
  }

  result.genotype = net.derive_genotype();
  result.final_gates = net.all_gates();
  result.nonlearnable_ratio = net.nonlearnable_ratio(result.genotype);
  if (result.nonlearnable_ratio > 0.3)
    result.advisory = advisory_text(result.nonlearnable_ratio);
  return result;
}

namespace {

nlohmann::ordered_json corr_json(const CorrRecord& c) {
  nlohmann::ordered_json j;
  j["cell"] = c.cell;
  j["node"] = c.node;
  j["raw"] = c.raw;
  j["normalized"] = c.normalized;
  j["kind"] = c.kind == CorrKind::CrossBatch ? "cross-batch" : "self-diagonal";
  j["clamp_warning"] = c.clamp_warning;
  return j;
}

}  // namespace

std::string trace_to_jsonl(const SearchTrace& trace) {
  std::ostringstream os;
  {
    nlohmann::ordered_json h;
    h["record"] = "header";
    h["schema_version"] = 1;
    h["total_steps"] = trace.total_steps;
    h["edges"] = trace.edge_names;
    h["ops"] = trace.op_names;
    h["aborted_non_finite"] = trace.aborted_non_finite;
    os << h.dump() << "\n";
  }
  for (const auto& s : trace.steps) {
    nlohmann::ordered_json j;
    j["record"] = "step";
    j["step"] = s.step;
    j["lr_w"] = s.lr_w;
    j["loss_w"] = s.loss_w;
    j["loss_alpha"] = s.loss_alpha;
    j["gates"] = s.gates;
    os << j.dump() << "\n";
    for (const auto& p : s.grad_p) {
      nlohmann::ordered_json pj;
      pj["record"] = "grad_p";
      pj["step"] = p.step;
      pj["cell"] = p.cell;
      pj["edge"] = p.edge;
      pj["op"] = p.op;
      pj["p"] = p.p;
      pj["grad_p"] = p.grad_p;
      os << pj.dump() << "\n";
    }
    for (const auto& c : s.corr) {
      auto cj = corr_json(c);
      cj["record"] = "corr";
      cj["step"] = c.step;
      os << cj.dump() << "\n";
    }
  }
  return os.str();
}

SearchTrace trace_from_jsonl(const std::string& text) {
  SearchTrace trace;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    std::string kind = j.at("record");
    if (kind == "header") {
      trace.total_steps = j.at("total_steps").get<std::size_t>();
      trace.edge_names = j.at("edges").get<std::vector<std::string>>();
      trace.op_names = j.at("ops").get<std::vector<std::string>>();
      trace.aborted_non_finite = j.value("aborted_non_finite", false);
    } else if (kind == "step") {
      StepRecord s;
      s.step = j.at("step").get<std::size_t>();
      s.lr_w = j.at("lr_w").get<double>();
      s.loss_w = j.at("loss_w").get<double>();
      s.loss_alpha = j.at("loss_alpha").get<double>();
      s.gates = j.at("gates").get<std::vector<std::vector<double>>>();
      trace.steps.push_back(std::move(s));
    } else if (kind == "grad_p") {
      if (trace.steps.empty()) throw std::runtime_error("trace: grad_p before step");
      trace.steps.back().grad_p.push_back(
          {j.at("step").get<std::size_t>(), j.at("cell").get<int>(),
           j.at("edge").get<std::string>(), j.at("op").get<std::string>(),
           j.at("p").get<double>(), j.at("grad_p").get<double>()});
    } else if (kind == "corr") {
      if (trace.steps.empty()) throw std::runtime_error("trace: corr before step");
      CorrRecord c;
      c.step = j.at("step").get<std::size_t>();
      c.cell = j.at("cell").get<int>();
      c.node = j.at("node").get<int>();
      c.raw = j.at("raw").get<double>();
      c.normalized = j.at("normalized").get<double>();
      c.kind = j.at("kind") == "cross-batch" ? CorrKind::CrossBatch : CorrKind::SelfDiagonal;
      c.clamp_warning = j.value("clamp_warning", false);
      trace.steps.back().corr.push_back(c);
    } else {
      throw std::runtime_error("trace: unknown record kind: " + kind);
    }
  }
  return trace;
}

}  // namespace naslab
