// Command-line surface: gen-data, bench, search, diag, theorem, report.
// Exit codes: 0 success, 1 usage/config error, 2 runtime/numerical error,
// 3 verification failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "naslab/bench.hpp"
#include "naslab/data.hpp"
#include "naslab/dynamics.hpp"
#include "naslab/io.hpp"
#include "naslab/search.hpp"

namespace fs = std::filesystem;
using namespace naslab;

namespace {

constexpr const char* kToolVersion = "0.1.0";

fs::path out_root() {
  if (const char* env = std::getenv("NASLAB_OUT")) return env;
  return "runs";
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const nlohmann::ordered_json& config,
                    const nlohmann::ordered_json& input_fingerprints,
                    const std::vector<std::string>& outputs) {
  nlohmann::ordered_json m;
  m["command"] = command;
  m["config"] = config;
  m["input_fingerprints"] = input_fingerprints;
  m["outputs"] = outputs;
  m["tool_version"] = kToolVersion;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

struct LoadedDataset {
  SplitDataset split;
  int d_in = 0;
  int n_classes = 0;
  std::uint64_t fingerprint = 0;
  nlohmann::json sidecar;
};

LoadedDataset load_dataset_dir(const fs::path& dir) {
  if (!fs::exists(dir / "dataset.bin"))
    throw std::invalid_argument("no dataset at " + dir.string() +
                                " (expected dataset.bin; run gen-data first)");
  LoadedDataset ld;
  Dataset full = read_dataset(dir / "dataset.bin", &ld.d_in, &ld.n_classes);
  ld.fingerprint = file_fingerprint(dir / "dataset.bin");
  ld.sidecar = nlohmann::json::parse(read_text_file(dir / "dataset.json"));
  // The split is reproduced from the recorded generator seed.
  TeacherSpec spec = teacher_spec_from_json(ld.sidecar.at("spec"));
  TeacherDataset ds = gen_teacher_dataset(spec, ld.sidecar.at("seed").get<std::uint64_t>());
  ld.split = std::move(ds.split);
  return ld;
}

int cmd_gen_data(const fs::path& out_dir, const std::optional<fs::path>& spec_file,
                 std::uint64_t seed, std::optional<double> noise_std,
                 std::optional<std::size_t> n_samples) {
  TeacherSpec spec;
  if (spec_file) spec = teacher_spec_from_json(nlohmann::json::parse(read_text_file(*spec_file)));
  if (noise_std) {
    if (*noise_std < 0.0) throw CLI::ValidationError("noise_std", "must be >= 0");
    spec.noise_std = *noise_std;
  }
  if (n_samples) spec.n_samples = *n_samples;

  TeacherDataset ds = gen_teacher_dataset(spec, seed);
  fs::create_directories(out_dir);
  write_dataset(out_dir / "dataset.bin", ds.full, spec.d_in, spec.n_classes);
  std::uint64_t fp = file_fingerprint(out_dir / "dataset.bin");
  write_dataset_sidecar(out_dir / "dataset.json", ds, fp);

  nlohmann::ordered_json cfg;
  cfg["spec"] = teacher_spec_json(spec);
  cfg["seed"] = seed;
  nlohmann::ordered_json fps;
  fps["dataset.bin"] = fingerprint_hex(fp);
  write_manifest(out_dir, "gen-data", cfg, fps, {"dataset.bin", "dataset.json"});
  std::cout << "fingerprint " << fingerprint_hex(fp) << "\n";
  return 0;
}

int cmd_search(SearchConfig config, const fs::path& data_dir, const fs::path& out_dir) {
  config.validate();
  LoadedDataset ld = load_dataset_dir(data_dir);
  SearchResult result = run_search(config, ld.split, ld.d_in, ld.n_classes);

  CellTopology topo = CellTopology::complete(config.num_nodes);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "genotype.txt", result.genotype.to_text(topo, config.op_set));
  write_text_file(out_dir / "genotype.json",
                  result.genotype.to_json(topo, config.op_set) + "\n");
  write_text_file(out_dir / "trace.jsonl", trace_to_jsonl(result.trace));

  nlohmann::ordered_json summary;
  summary["nonlearnable_ratio"] = result.nonlearnable_ratio;
  summary["final_gates"] = result.final_gates;
  summary["advisory"] = result.advisory ? nlohmann::json(*result.advisory) : nlohmann::json();
  summary["aborted_non_finite"] = result.trace.aborted_non_finite;
  write_text_file(out_dir / "result.json", summary.dump(2) + "\n");

  nlohmann::ordered_json fps;
  fps["dataset.bin"] = fingerprint_hex(ld.fingerprint);
  nlohmann::ordered_json cfg = config.to_json();
  cfg["data_dir"] = data_dir.string();
  write_manifest(out_dir, "search", cfg, fps,
                 {"genotype.txt", "genotype.json", "trace.jsonl", "result.json"});

  if (result.advisory) std::cout << "advisory: " << *result.advisory << "\n";
  std::cout << "genotype written to " << (out_dir / "genotype.txt").string() << "\n";
  return result.trace.aborted_non_finite ? 2 : 0;
}

int cmd_bench_build(const fs::path& data_dir, const fs::path& out_dir, BenchConfig config,
                    int workers, bool resume) {
  LoadedDataset ld = load_dataset_dir(data_dir);
  fs::create_directories(out_dir);
  fs::path table_path = out_dir / "bench_table.json";

  std::optional<BenchTable> prior;
  if (resume && fs::exists(table_path))
    prior = BenchTable::from_json(read_text_file(table_path));

  auto progress = [](std::size_t done, std::size_t total) {
    if (done % 16 == 0 || done == total)
      std::cout << "trained " << done << "/" << total << "\n";
  };
  BenchTable table = build_table(config, ld.split, ld.d_in, ld.n_classes, ld.fingerprint,
                                 workers, prior ? &*prior : nullptr, progress);
  write_text_file(table_path, table.to_json());

  nlohmann::ordered_json fps;
  fps["dataset.bin"] = fingerprint_hex(ld.fingerprint);
  nlohmann::ordered_json cfg = config.to_json();
  cfg["data_dir"] = data_dir.string();
  cfg["workers"] = workers;
  write_manifest(out_dir, "bench build", cfg, fps, {"bench_table.json"});
  std::cout << "table fingerprint " << table.fingerprint << " entries "
            << table.entries.size() << "\n";
  return 0;
}

std::vector<std::string> csv_escape_none;  // placeholder to keep includes tidy

int cmd_theorem(int instances, std::uint64_t seed, const fs::path& out_file) {
  std::ostringstream csv;
  csv << "instance,n,direction,delta,eta,eps,t_hit,bound,pass\n";
  bool all_pass = true;
  for (int i = 0; i < instances; ++i) {
    int n = 2 + int(splitmix64(derive_seed(seed, std::uint64_t(i))) % 7);  // 2..8
    double eps = (i % 2 == 0) ? 0.1 : 0.01;
    if (eps >= 1.0 - 1.0 / double(n)) eps = 0.5 * (1.0 - 1.0 / double(n));
    Direction dir = (i % 4 < 2) ? Direction::Ascent : Direction::Descent;
    auto inst = DynamicsInstance::random(derive_seed(seed, 5000 + std::uint64_t(i)), n,
                                         0.05, 2.0, 0.001, 0.5, eps, dir);
    bool pass = true;
    DominateResult r{};
    try {
      r = iterations_to_dominate(inst);
      pass = double(r.t_hit) <= std::ceil(r.bound);
    } catch (const theorem_violation&) {
      pass = false;
    }
    all_pass = all_pass && pass;
    csv << i << "," << n << "," << (dir == Direction::Ascent ? "ascent" : "descent")
        << "," << margin(inst) << "," << inst.eta << "," << inst.eps << "," << r.t_hit
        << "," << r.bound << "," << (pass ? 1 : 0) << "\n";
  }
  write_text_file(out_file, csv.str());
  std::cout << (all_pass ? "all instances within bound" : "BOUND VIOLATION") << "\n";
  return all_pass ? 0 : 3;
}

SearchTrace load_run_trace(const fs::path& run_dir) {
  return trace_from_jsonl(read_text_file(run_dir / "trace.jsonl"));
}

std::string run_dataset_fp(const fs::path& run_dir) {
  auto m = nlohmann::json::parse(read_text_file(run_dir / "manifest.json"));
  return m.at("input_fingerprints").value("dataset.bin", "");
}

int cmd_diag(const std::string& what, const fs::path& run_dir, const fs::path& out_file) {
  SearchTrace trace = load_run_trace(run_dir);
  std::ostringstream csv;
  if (what == "corr") {
    csv << "step,cell,node,kind,raw,normalized\n";
    for (const auto& s : trace.steps)
      for (const auto& c : s.corr)
        csv << c.step << "," << c.cell << "," << c.node << ","
            << (c.kind == CorrKind::CrossBatch ? "cross-batch" : "self-diagonal") << ","
            << c.raw << "," << c.normalized << "\n";
  } else if (what == "gradp") {
    csv << "step,cell,edge,op,p,grad_p\n";
    for (const auto& s : trace.steps)
      for (const auto& p : s.grad_p)
        csv << p.step << "," << p.cell << "," << p.edge << "," << p.op << "," << p.p
            << "," << p.grad_p << "\n";
  } else if (what == "domination") {
    auto series = trace.gate_series();
    std::vector<OpKind> ops;
    for (const auto& name : trace.op_names) ops.push_back(*op_from_name(name));
    auto report = domination_trace(series, ops);
    csv << "edge,dominated_at\n";
    for (const auto& e : report.edges)
      csv << e.edge << "," << (e.dominated_at ? std::to_string(*e.dominated_at) : "none")
          << "\n";
  } else {
    throw CLI::ValidationError("diag", "unknown diagnostic: " + what);
  }
  write_text_file(out_file, csv.str());
  std::cout << "wrote " << out_file.string() << "\n";
  return 0;
}

int cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir,
               const std::optional<fs::path>& bench_table_path) {
  if (run_dirs.empty()) throw CLI::ValidationError("report", "no run directories given");
  std::string fp0 = run_dataset_fp(run_dirs[0]);
  for (const auto& d : run_dirs)
    if (run_dataset_fp(d) != fp0)
      throw std::runtime_error("report: mixed dataset fingerprints across runs");

  fs::create_directories(out_dir);

  std::optional<BenchTable> table;
  if (bench_table_path) table = BenchTable::from_json(read_text_file(*bench_table_path));

  // Per-run series files plus one summary/grid row per run.
  std::ostringstream summary, grid;
  summary << "run,level,gate_mode,lr_w,seed,nonlearnable_ratio,final_loss\n";
  grid << "level,gate_mode,lr_w,runs,mean_rank,std_rank,mean_nonlearnable,std_nonlearnable\n";
  struct GridCell {
    std::vector<double> ranks, ratios;
  };
  std::map<std::string, GridCell> cells;

  std::ostringstream domination_csv, gradp_csv, corr_csv;
  domination_csv << "run,step,edge,op,gate\n";
  gradp_csv << "run,step,cell,edge,op,p,grad_p\n";
  corr_csv << "run,step,cell,node,kind,raw,normalized\n";

  for (const auto& dir : run_dirs) {
    auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    auto cfg = manifest.at("config");
    SearchTrace trace = load_run_trace(dir);
    auto result = nlohmann::json::parse(read_text_file(dir / "result.json"));
    std::string run = dir.filename().string();

    for (const auto& s : trace.steps) {
      for (std::size_t e = 0; e < trace.edge_names.size(); ++e)
        for (std::size_t k = 0; k < trace.op_names.size(); ++k)
          domination_csv << run << "," << s.step << "," << trace.edge_names[e] << ","
                         << trace.op_names[k] << "," << s.gates[e][k] << "\n";
      for (const auto& p : s.grad_p)
        gradp_csv << run << "," << p.step << "," << p.cell << "," << p.edge << ","
                  << p.op << "," << p.p << "," << p.grad_p << "\n";
      for (const auto& c : s.corr)
        corr_csv << run << "," << c.step << "," << c.cell << "," << c.node << ","
                 << (c.kind == CorrKind::CrossBatch ? "cross-batch" : "self-diagonal")
                 << "," << c.raw << "," << c.normalized << "\n";
    }

    double ratio = result.at("nonlearnable_ratio").get<double>();
    double final_loss = trace.steps.empty() ? 0.0 : trace.steps.back().loss_w;
    summary << run << "," << cfg.value("level", "?") << "," << cfg.value("gate_mode", "?")
            << "," << cfg.value("lr_w", 0.0) << "," << cfg.value("seed", 0) << ","
            << ratio << "," << final_loss << "\n";

    std::ostringstream key;
    key << cfg.value("level", "?") << "," << cfg.value("gate_mode", "?") << ","
        << cfg.value("lr_w", 0.0);
    auto& cell = cells[key.str()];
    cell.ratios.push_back(ratio);
    if (table) {
      // Parse with the table's own topology and op indices so ranks are
      // comparable; a genotype outside the table's space is skipped.
      try {
        Genotype g = Genotype::from_text(read_text_file(dir / "genotype.txt"),
                                         table->config.topo, table->config.op_set);
        cell.ranks.push_back(rank(*table, g));
      } catch (const std::exception& e) {
        std::cerr << "note: " << run << " not rankable against the table ("
                  << e.what() << ")\n";
      }
    }
  }

  auto mean_std = [](const std::vector<double>& v) -> std::pair<double, double> {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= double(v.size());
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    return {m, v.size() > 1 ? std::sqrt(s2 / double(v.size() - 1)) : 0.0};
  };
  for (const auto& [key, cell] : cells) {
    auto [mr, sr] = mean_std(cell.ranks);
    auto [mn, sn] = mean_std(cell.ratios);
    grid << key << "," << cell.ratios.size() << "," << mr << "," << sr << "," << mn
         << "," << sn << "\n";
  }

  write_text_file(out_dir / "domination_series.csv", domination_csv.str());
  write_text_file(out_dir / "grad_p_series.csv", gradp_csv.str());
  write_text_file(out_dir / "correlation_series.csv", corr_csv.str());
  write_text_file(out_dir / "summary.csv", summary.str());
  write_text_file(out_dir / "grid.csv", grid.str());
  std::cout << "report written to " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"micro-scale differentiable architecture search laboratory"};
  app.require_subcommand(1);

  // gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate a teacher dataset");
  std::string gen_out = (out_root() / "data").string();
  std::string gen_spec;
  std::uint64_t gen_seed = 0;
  double gen_noise = -1.0;
  std::int64_t gen_samples = -1;
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--spec", gen_spec, "teacher spec JSON file");
  gen->add_option("--seed", gen_seed, "generation seed");
  gen->add_option("--noise-std", gen_noise, "input noise stddev override");
  gen->add_option("--n-samples", gen_samples, "sample count override");

  // search -----------------------------------------------------------------
  auto* search = app.add_subcommand("search", "run an architecture search");
  std::string search_config, search_data = (out_root() / "data").string();
  std::string search_out = (out_root() / "search").string();
  std::string search_manifest;
  std::map<std::string, std::string> overrides;
  std::vector<std::string> override_kv;
  std::string opt_level, opt_gate, opt_batch_mode;
  double opt_lr_w = -1.0, opt_lr_alpha = -1.0;
  int opt_epochs = -1, opt_nodes = -1;
  std::int64_t opt_seed = -1;
  bool opt_diag = false;
  search->add_option("--config", search_config, "config JSON file");
  search->add_option("--from-manifest", search_manifest, "rerun from a manifest.json");
  search->add_option("--data", search_data, "dataset directory");
  search->add_option("--out", search_out, "output directory");
  search->add_option("--level", opt_level, "bi-level | single-level");
  search->add_option("--gate", opt_gate, "softmax | sigmoid");
  search->add_option("--batch-mode", opt_batch_mode,
                     "diff-dataset | same-dataset-diff-batch | same-batch");
  search->add_option("--lr-w", opt_lr_w, "weight learning rate");
  search->add_option("--lr-alpha", opt_lr_alpha, "alpha learning rate");
  search->add_option("--epochs", opt_epochs, "search epochs");
  search->add_option("--num-nodes", opt_nodes, "cell node count");
  search->add_option("--seed", opt_seed, "run seed");
  search->add_flag("--diagnostics", opt_diag, "record grad_p and correlation traces");

  // bench ------------------------------------------------------------------
  auto* bench = app.add_subcommand("bench", "tabular oracle over the micro space");
  auto* bench_build = bench->add_subcommand("build", "train every genotype");
  std::string bench_data = (out_root() / "data").string();
  std::string bench_out = (out_root() / "bench").string();
  int bench_workers = 1, bench_nodes = 3, bench_steps = 400;
  std::uint64_t bench_seed = 0;
  bool bench_resume = false;
  bench_build->add_option("--data", bench_data, "dataset directory");
  bench_build->add_option("--out", bench_out, "output directory");
  bench_build->add_option("--workers", bench_workers, "parallel trainers");
  bench_build->add_option("--num-nodes", bench_nodes, "cell node count");
  bench_build->add_option("--train-steps", bench_steps, "steps per genotype");
  bench_build->add_option("--seed", bench_seed, "global bench seed");
  bench_build->add_flag("--resume", bench_resume, "continue a partial table");
  auto* bench_optimal = bench->add_subcommand("optimal", "print the best genotype");
  std::string bench_table_path;
  bench_optimal->add_option("--table", bench_table_path, "bench_table.json")->required();
  auto* bench_rank = bench->add_subcommand("rank", "rank a genotype file");
  std::string rank_table, rank_genotype;
  bench_rank->add_option("--table", rank_table, "bench_table.json")->required();
  bench_rank->add_option("--genotype", rank_genotype, "genotype.txt")->required();
  bench->require_subcommand(1);

  // diag -------------------------------------------------------------------
  auto* diag = app.add_subcommand("diag", "extract diagnostics from a run");
  std::string diag_what, diag_run, diag_out = "diag.csv";
  diag->add_option("what", diag_what, "corr | gradp | domination")->required();
  diag->add_option("--run", diag_run, "search run directory")->required();
  diag->add_option("--out", diag_out, "output CSV");

  // theorem ----------------------------------------------------------------
  auto* theorem = app.add_subcommand("theorem", "iteration-bound verification");
  auto* theorem_verify = theorem->add_subcommand("verify", "Monte-Carlo sweep");
  int th_instances = 200;
  std::uint64_t th_seed = 0;
  std::string th_out = "theorem.csv";
  theorem_verify->add_option("--instances", th_instances, "instance count");
  theorem_verify->add_option("--seed", th_seed, "sweep seed");
  theorem_verify->add_option("--out", th_out, "output CSV");
  theorem->require_subcommand(1);

  // report -----------------------------------------------------------------
  auto* report = app.add_subcommand("report", "aggregate runs to plot-ready CSVs");
  std::vector<std::string> report_runs;
  std::string report_out = (out_root() / "report").string();
  std::string report_table;
  report->add_option("runs", report_runs, "run directories")->required();
  report->add_option("--out", report_out, "output directory");
  report->add_option("--bench-table", report_table, "bench_table.json for ranking");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      return cmd_gen_data(gen_out, gen_spec.empty() ? std::nullopt : std::optional<fs::path>(gen_spec),
                          gen_seed,
                          gen_noise >= 0.0 ? std::optional<double>(gen_noise) : std::nullopt,
                          gen_samples >= 0 ? std::optional<std::size_t>(std::size_t(gen_samples))
                                           : std::nullopt);
    }
    if (*search) {
      SearchConfig config;
      if (!search_manifest.empty()) {
        auto m = nlohmann::json::parse(read_text_file(search_manifest));
        auto cfg = m.at("config");
        std::string data_dir = cfg.at("data_dir").get<std::string>();
        cfg.erase("data_dir");
        config = SearchConfig::from_json(cfg);
        return cmd_search(config, data_dir, search_out);
      }
      if (!search_config.empty())
        config = SearchConfig::from_json(nlohmann::json::parse(read_text_file(search_config)));
      if (!opt_level.empty()) {
        if (opt_level == "bi-level") config.level = Level::BiLevel;
        else if (opt_level == "single-level") config.level = Level::SingleLevel;
        else throw CLI::ValidationError("--level", "unknown level " + opt_level);
      }
      if (!opt_gate.empty()) {
        if (opt_gate == "softmax") config.gate_mode = GateMode::Softmax;
        else if (opt_gate == "sigmoid") config.gate_mode = GateMode::Sigmoid;
        else throw CLI::ValidationError("--gate", "unknown gate " + opt_gate);
      }
      if (!opt_batch_mode.empty()) {
        if (opt_batch_mode == "diff-dataset") config.batch_mode = BatchMode::DiffDataset;
        else if (opt_batch_mode == "same-dataset-diff-batch") config.batch_mode = BatchMode::SameDatasetDiffBatch;
        else if (opt_batch_mode == "same-batch") config.batch_mode = BatchMode::SameBatch;
        else throw CLI::ValidationError("--batch-mode", "unknown mode " + opt_batch_mode);
      }
      if (opt_lr_w >= 0.0) config.lr_w = opt_lr_w;
      if (opt_lr_alpha >= 0.0) config.lr_alpha = opt_lr_alpha;
      if (opt_epochs >= 0) config.epochs = opt_epochs;
      if (opt_nodes >= 2) config.num_nodes = opt_nodes;
      if (opt_seed >= 0) config.seed = std::uint64_t(opt_seed);
      if (opt_diag) config.diagnostics = true;
      return cmd_search(config, search_data, search_out);
    }
    if (*bench_build) {
      BenchConfig config;
      config.topo = CellTopology::complete(bench_nodes);
      config.train_steps = bench_steps;
      config.seed = bench_seed;
      return cmd_bench_build(bench_data, bench_out, config, bench_workers, bench_resume);
    }
    if (*bench_optimal) {
      BenchTable table = BenchTable::from_json(read_text_file(bench_table_path));
      Genotype best = optimal(table);
      std::cout << best.to_text(table.config.topo, table.config.op_set);
      return 0;
    }
    if (*bench_rank) {
      BenchTable table = BenchTable::from_json(read_text_file(rank_table));
      Genotype g = Genotype::from_text(read_text_file(rank_genotype), table.config.topo,
                                       table.config.op_set);
      std::cout << "rank " << rank(table, g) << "\n";
      return 0;
    }
    if (*diag) return cmd_diag(diag_what, diag_run, diag_out);
    if (*theorem_verify) return cmd_theorem(th_instances, th_seed, th_out);
    if (*report) {
      std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
      return cmd_report(dirs, report_out,
                        report_table.empty() ? std::nullopt
                                             : std::optional<fs::path>(report_table));
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const theorem_violation& e) {
    std::cerr << "verification failure: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
