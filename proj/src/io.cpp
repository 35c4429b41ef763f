#include "naslab/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace naslab {

std::uint64_t fnv1a64(const void* bytes, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fingerprint_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t file_fingerprint(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + p.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (f.read(buf, sizeof buf) || f.gcount() > 0)
    h = fnv1a64(buf, std::size_t(f.gcount()), h);
  return h;
}

namespace {
constexpr char kMagic[4] = {'N', 'L', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
}  // namespace

void write_dataset(const std::filesystem::path& bin_path, const Dataset& ds,
                   int d_in, int n_classes) {
  std::ofstream f(bin_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write: " + bin_path.string());
  f.write(kMagic, 4);
  put<std::uint32_t>(f, kVersion);
  put<std::uint32_t>(f, std::uint32_t(d_in));
  put<std::uint32_t>(f, std::uint32_t(n_classes));
  put<std::uint64_t>(f, ds.size());
  f.write(reinterpret_cast<const char*>(ds.inputs.data.data()),
          std::streamsize(ds.inputs.data.size() * sizeof(double)));
  for (int l : ds.labels) put<std::int32_t>(f, l);
  if (!f) throw std::runtime_error("short write: " + bin_path.string());
}

Dataset read_dataset(const std::filesystem::path& bin_path, int* d_in_out,
                     int* n_classes_out) {
  std::ifstream f(bin_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + bin_path.string());
  char magic[4];
  f.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad dataset magic: " + bin_path.string());
  auto version = get<std::uint32_t>(f);
  if (version != kVersion) throw std::runtime_error("unsupported dataset version");
  auto d_in = get<std::uint32_t>(f);
  auto n_classes = get<std::uint32_t>(f);
  auto n = get<std::uint64_t>(f);
  Dataset ds;
  ds.inputs = Tensor::zeros({std::size_t(n), std::size_t(d_in)});
  f.read(reinterpret_cast<char*>(ds.inputs.data.data()),
         std::streamsize(ds.inputs.data.size() * sizeof(double)));
  ds.labels.resize(std::size_t(n));
  for (auto& l : ds.labels) l = get<std::int32_t>(f);
  if (!f) throw std::runtime_error("short read: " + bin_path.string());
  if (d_in_out) *d_in_out = int(d_in);
  if (n_classes_out) *n_classes_out = int(n_classes);
  return ds;
}

nlohmann::ordered_json teacher_spec_json(const TeacherSpec& spec) {
  nlohmann::ordered_json j;
  j["d_in"] = spec.d_in;
  j["d"] = spec.d;
  j["n_classes"] = spec.n_classes;
  j["num_cells"] = spec.num_cells;
  j["num_nodes"] = spec.topo.num_nodes;
  std::vector<std::string> ops;
  for (OpKind k : spec.op_set) ops.emplace_back(op_name(k));
  j["op_set"] = ops;
  j["noise_std"] = spec.noise_std;
  j["n_samples"] = spec.n_samples;
  return j;
}

TeacherSpec teacher_spec_from_json(const nlohmann::json& j) {
  TeacherSpec spec;
  spec.d_in = j.at("d_in").get<int>();
  spec.d = j.at("d").get<int>();
  spec.n_classes = j.at("n_classes").get<int>();
  spec.num_cells = j.at("num_cells").get<int>();
  spec.topo = CellTopology::complete(j.at("num_nodes").get<int>());
  spec.op_set.clear();
  for (const auto& name : j.at("op_set")) {
    auto k = op_from_name(name.get<std::string>());
    if (!k) throw std::runtime_error("unknown op in spec: " + name.get<std::string>());
    spec.op_set.push_back(*k);
  }
  spec.noise_std = j.at("noise_std").get<double>();
  spec.n_samples = j.at("n_samples").get<std::size_t>();
  return spec;
}

void write_dataset_sidecar(const std::filesystem::path& json_path,
                           const TeacherDataset& ds, std::uint64_t bin_fingerprint) {
  nlohmann::ordered_json j;
  j["spec"] = teacher_spec_json(ds.spec);
  j["seed"] = ds.seed;
  j["teacher_seed"] = ds.teacher_seed;
  j["teacher_genotype"] =
      nlohmann::json::parse(ds.teacher_genotype.to_json(ds.spec.topo, ds.spec.op_set));
  j["fingerprint"] = fingerprint_hex(bin_fingerprint);
  write_text_file(json_path, j.dump(2) + "\n");
}

std::string read_text_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot open: " + p.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write: " + p.string());
  f << text;
}

}  // namespace naslab
