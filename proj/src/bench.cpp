#include "naslab/bench.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "naslab/io.hpp"
#include "naslab/optim.hpp"
#include "naslab/rng.hpp"
#include "naslab/tape.hpp"

namespace naslab {

nlohmann::ordered_json BenchConfig::to_json() const {
  nlohmann::ordered_json j;
  j["num_nodes"] = topo.num_nodes;
  std::vector<std::string> ops;
  for (OpKind k : op_set) ops.emplace_back(op_name(k));
  j["op_set"] = ops;
  j["num_cells"] = num_cells;
  j["d"] = d;
  j["train_steps"] = train_steps;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["n_seeds"] = n_seeds;
  j["seed"] = seed;
  return j;
}

BenchConfig BenchConfig::from_json(const nlohmann::json& j) {
  BenchConfig c;
  c.topo = CellTopology::complete(j.at("num_nodes").get<int>());
  c.op_set.clear();
  for (const auto& name : j.at("op_set")) {
    auto k = op_from_name(name.get<std::string>());
    if (!k) throw std::runtime_error("bench config: unknown op: " + name.get<std::string>());
    c.op_set.push_back(*k);
  }
  c.num_cells = j.at("num_cells").get<int>();
  c.d = j.at("d").get<int>();
  c.train_steps = j.at("train_steps").get<int>();
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.n_seeds = j.at("n_seeds").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<Genotype> enumerate_genotypes(const CellTopology& topo, int n_ops) {
  if (n_ops < 2) throw std::invalid_argument("enumerate_genotypes: n_ops must be >= 2");
  std::size_t edges = topo.num_edges();
  double count = std::pow(double(n_ops), double(edges));
  if (count > 1e6) throw std::runtime_error("enumerate_genotypes: space exceeds 10^6");
  std::vector<Genotype> out;
  out.reserve(std::size_t(count));
  Genotype g;
  g.ops.assign(edges, 0);
  while (true) {
    out.push_back(g);
    std::size_t e = edges;
    while (e > 0) {
      --e;
      if (++g.ops[e] < n_ops) break;
      g.ops[e] = 0;
      if (e == 0) return out;
    }
  }
}

std::string bench_fingerprint(const BenchConfig& config, std::uint64_t dataset_fp) {
  std::string cfg = config.to_json().dump();
  std::uint64_t h = fnv1a64(cfg.data(), cfg.size());
  h = fnv1a64(&dataset_fp, sizeof dataset_fp, h);
  return fingerprint_hex(h);
}

namespace {

std::uint64_t genotype_seed(std::uint64_t global_seed, const Genotype& g) {
  std::uint64_t h = global_seed;
  for (int op : g.ops) h = splitmix64(h ^ std::uint64_t(op + 1));
  return h;
}

}  // namespace

BenchEntry train_entry(const BenchConfig& config, const Genotype& g,
                       const SplitDataset& data, int d_in, int n_classes) {
  BenchEntry entry;
  entry.genotype = g;
  std::uint64_t seed = genotype_seed(config.seed, g);
  DiscreteNet net = DiscreteNet::create(config.topo, config.op_set, g, config.num_cells,
                                        d_in, config.d, n_classes, seed);
  Optimizer opt = Optimizer::sgd_momentum();
  Rng rng(derive_seed(seed, 50));
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t pos = order.size();

  double last_loss = 0.0;
  try {
    for (int step = 0; step < config.train_steps; ++step) {
      if (pos + std::size_t(config.batch_size) > order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      std::vector<std::size_t> idx(order.begin() + pos,
                                   order.begin() + pos + std::size_t(config.batch_size));
      pos += std::size_t(config.batch_size);
      Batch batch = data.train.gather(idx);

      for (Param* p : net.params()) p->zero_grad();
      Tape tape;
      NodeId loss = tape.cross_entropy_logits(discrete_forward(tape, net, batch.inputs),
                                              batch.labels);
      tape.backward(loss);
      last_loss = tape.value(loss).data[0];
      if (!std::isfinite(last_loss)) throw numeric_error("bench: non-finite loss");
      opt.step(net.params(), cosine_lr(std::size_t(step), std::size_t(config.train_steps), config.lr), 0.0);
    }

    entry.final_train_loss = last_loss;
    Tape tape;
    NodeId logits = discrete_forward(tape, net, data.valid.inputs);
    NodeId loss = tape.cross_entropy_logits(logits, data.valid.labels);
    entry.valid_loss = tape.value(loss).data[0];
    const Tensor& L = tape.value(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < L.shape[0]; ++i) {
      int best = 0;
      for (std::size_t c = 1; c < L.shape[1]; ++c)
        if (L.at(i, c) > L.at(i, std::size_t(best))) best = int(c);
      if (best == data.valid.labels[i]) ++correct;
    }
    entry.valid_accuracy = double(correct) / double(L.shape[0]);
  } catch (const numeric_error&) {
    entry.diverged = true;
  }
  return entry;
}

BenchTable build_table(const BenchConfig& config, const SplitDataset& data,
                       int d_in, int n_classes, std::uint64_t dataset_fp,
                       int workers, const BenchTable* resume_from,
                       const std::function<void(std::size_t, std::size_t)>& progress) {
  BenchTable table;
  table.config = config;
  table.fingerprint = bench_fingerprint(config, dataset_fp);

  auto genotypes = enumerate_genotypes(config.topo, int(config.op_set.size()));
  std::vector<const Genotype*> todo;
  if (resume_from) {
    if (resume_from->fingerprint != table.fingerprint)
      throw std::runtime_error("bench resume: fingerprint mismatch");
    table.entries = resume_from->entries;
  }
  for (const auto& g : genotypes)
    if (!table.entries.contains(g)) todo.push_back(&g);

  std::mutex mu;
  std::atomic<std::size_t> next{0}, done{0};
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      BenchEntry entry = train_entry(config, *todo[i], data, d_in, n_classes);
      std::lock_guard lock(mu);
      table.entries[*todo[i]] = std::move(entry);
      if (progress) progress(++done, todo.size());
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return table;
}

double rank(const BenchTable& table, const Genotype& g) {
  auto it = table.entries.find(g);
  if (it == table.entries.end()) throw std::runtime_error("rank: unknown genotype");
  if (it->second.diverged) throw std::runtime_error("rank: genotype diverged");
  std::size_t higher = 0, total = 0;
  for (const auto& [_, e] : table.entries) {
    if (e.diverged) continue;
    ++total;
    if (e.valid_accuracy > it->second.valid_accuracy) ++higher;
  }
  return double(higher) / double(total);
}

double rank(const BenchTable& table, const Genotype& g, const std::string& query_fingerprint) {
  if (query_fingerprint != table.fingerprint)
    throw std::runtime_error("rank: fingerprint mismatch (foreign table)");
  return rank(table, g);
}

Genotype optimal(const BenchTable& table) {
  auto genotypes = enumerate_genotypes(table.config.topo, int(table.config.op_set.size()));
  std::size_t present = 0;
  for (const auto& g : genotypes) present += table.entries.contains(g);
  if (present != genotypes.size())
    throw std::runtime_error("optimal: table is incomplete");

  const Genotype* best = nullptr;
  double best_acc = -1.0;
  for (const auto& [g, e] : table.entries) {
    if (e.diverged) continue;
    // std::map iterates genotypes in lexicographic order, so strict
    // improvement keeps the lexicographically smallest among ties.
    if (e.valid_accuracy > best_acc) {
      best_acc = e.valid_accuracy;
      best = &g;
    }
  }
  if (!best) throw std::runtime_error("optimal: all entries diverged");
  return *best;
}

std::string BenchTable::to_json() const {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["fingerprint"] = fingerprint;
  j["config"] = config.to_json();
  nlohmann::ordered_json entries_json = nlohmann::ordered_json::array();
  for (const auto& [g, e] : entries) {
    nlohmann::ordered_json ej;
    ej["ops"] = g.ops;
    ej["final_train_loss"] = e.final_train_loss;
    ej["valid_accuracy"] = e.valid_accuracy;
    ej["valid_loss"] = e.valid_loss;
    ej["diverged"] = e.diverged;
    entries_json.push_back(std::move(ej));
  }
  j["entries"] = std::move(entries_json);
  return j.dump(2) + "\n";
}

BenchTable BenchTable::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  if (j.at("version").get<int>() != 1) throw std::runtime_error("bench table: bad version");
  BenchTable t;
  t.fingerprint = j.at("fingerprint").get<std::string>();
  t.config = BenchConfig::from_json(j.at("config"));
  for (const auto& ej : j.at("entries")) {
    BenchEntry e;
    e.genotype.ops = ej.at("ops").get<std::vector<int>>();
    e.final_train_loss = ej.at("final_train_loss").get<double>();
    e.valid_accuracy = ej.at("valid_accuracy").get<double>();
    e.valid_loss = ej.at("valid_loss").get<double>();
    e.diverged = ej.at("diverged").get<bool>();
    t.entries[e.genotype] = std::move(e);
  }
  return t;
}

}  // namespace naslab
