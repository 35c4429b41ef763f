#include <doctest.h>

#include "naslab/bench.hpp"
#include "naslab/io.hpp"

using namespace naslab;

namespace {

// 2 nodes -> a single edge, so the space is tiny enough to train in tests.
BenchConfig tiny_config() {
  BenchConfig c;
  c.topo = CellTopology::complete(2);
  c.op_set = {OpKind::Zero, OpKind::Skip, OpKind::Smooth, OpKind::Lin};
  c.num_cells = 1;
  c.d = 8;
  c.train_steps = 40;
  c.batch_size = 32;
  c.seed = 3;
  return c;
}

TeacherDataset tiny_dataset() {
  TeacherSpec spec;
  spec.d_in = 8;
  spec.d = 8;
  spec.num_cells = 1;
  spec.topo = CellTopology::complete(2);
  spec.n_samples = 512;
  return gen_teacher_dataset(spec, 77);
}

BenchTable synthetic_table(const std::vector<double>& accs,
                           const std::vector<bool>& diverged = {}) {
  BenchTable t;
  t.config = tiny_config();
  t.fingerprint = "synthetic";
  for (std::size_t i = 0; i < accs.size(); ++i) {
    BenchEntry e;
    e.genotype.ops = {int(i)};
    e.valid_accuracy = accs[i];
    e.diverged = i < diverged.size() && diverged[i];
    t.entries[e.genotype] = e;
  }
  return t;
}

}  // namespace

TEST_CASE("genotype enumeration is lexicographic with the expected counts") {
  CellTopology one_edge = CellTopology::complete(2);
  auto g4 = enumerate_genotypes(one_edge, 4);
  REQUIRE(g4.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(g4[std::size_t(i)].ops == std::vector<int>{i});

  auto g64 = enumerate_genotypes(CellTopology::complete(3), 4);
  CHECK(g64.size() == 64);
  CHECK(g64[0].ops == std::vector<int>{0, 0, 0});
  CHECK(g64[1].ops == std::vector<int>{0, 0, 1});
  CHECK(g64[63].ops == std::vector<int>{3, 3, 3});
  for (std::size_t i = 1; i < g64.size(); ++i) CHECK(g64[i - 1] < g64[i]);

  CHECK(enumerate_genotypes(CellTopology::complete(4), 5).size() == 15625);
  CHECK_THROWS(enumerate_genotypes(CellTopology::complete(4), 12));  // > 10^6
  CHECK_THROWS_AS(enumerate_genotypes(one_edge, 1), std::invalid_argument);
}

TEST_CASE("rank uses strictly-higher counting with shared ties") {
  BenchTable t = synthetic_table({0.9, 0.5, 0.5, 0.1});
  CHECK(rank(t, {{0}}) == 0.0);
  CHECK(rank(t, {{1}}) == doctest::Approx(0.25));
  CHECK(rank(t, {{2}}) == doctest::Approx(0.25));  // tie shares the best rank
  CHECK(rank(t, {{3}}) == doctest::Approx(0.75));
  CHECK_THROWS(rank(t, {{9}}));
}

TEST_CASE("diverged entries are excluded from ranking") {
  BenchTable t = synthetic_table({0.9, 0.5, 0.7, 0.1}, {false, false, true, false});
  CHECK(rank(t, {{1}}) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS(rank(t, {{2}}));  // diverged query
}

TEST_CASE("rank refuses a foreign fingerprint") {
  BenchTable t = synthetic_table({0.9, 0.5, 0.5, 0.1});
  CHECK(rank(t, {{0}}, "synthetic") == 0.0);
  CHECK_THROWS(rank(t, {{0}}, "other"));
}

TEST_CASE("optimal picks the best entry and breaks ties lexicographically") {
  BenchTable t = synthetic_table({0.5, 0.9, 0.9, 0.1});
  CHECK(optimal(t).ops == std::vector<int>{1});

  BenchTable partial = t;
  partial.entries.erase(Genotype{{3}});
  CHECK_THROWS(optimal(partial));
}

TEST_CASE("bench build is deterministic and resumable") {
  BenchConfig config = tiny_config();
  TeacherDataset ds = tiny_dataset();
  std::uint64_t fp = 123456;

  BenchTable full = build_table(config, ds.split, 8, 4, fp);
  CHECK(full.entries.size() == 4);
  CHECK(full.fingerprint == bench_fingerprint(config, fp));

  BenchTable again = build_table(config, ds.split, 8, 4, fp, /*workers=*/2);
  CHECK(again.to_json() == full.to_json());

  // Resume completes a partial table without retraining existing entries.
  BenchTable partial = full;
  partial.entries.erase(Genotype{{2}});
  partial.entries.erase(Genotype{{3}});
  BenchTable resumed = build_table(config, ds.split, 8, 4, fp, 1, &partial);
  CHECK(resumed.to_json() == full.to_json());

  // Resume refuses a table built under a different config/dataset.
  BenchTable foreign = full;
  foreign.fingerprint = "deadbeef";
  CHECK_THROWS(build_table(config, ds.split, 8, 4, fp, 1, &foreign));
}

TEST_CASE("bench table json round-trips") {
  BenchConfig config = tiny_config();
  TeacherDataset ds = tiny_dataset();
  BenchTable full = build_table(config, ds.split, 8, 4, 9);
  BenchTable back = BenchTable::from_json(full.to_json());
  CHECK(back.to_json() == full.to_json());
  CHECK(back.fingerprint == full.fingerprint);
  CHECK(back.entries.size() == full.entries.size());
}

TEST_CASE("all-zero genotype predicts at chance level") {
  BenchConfig config = tiny_config();
  TeacherDataset ds = tiny_dataset();
  BenchEntry e = train_entry(config, Genotype{{0}}, ds.split, 8, 4);
  CHECK(!e.diverged);
  CHECK(e.valid_accuracy == doctest::Approx(0.25).epsilon(0.2));
}
