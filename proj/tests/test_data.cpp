#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dgstmtl/data.hpp"
#include "dgstmtl/graph_prior.hpp"
#include "test_support.hpp"

using namespace dgstmtl;
using test_support::random_tensor;

namespace {

namespace fs = std::filesystem;

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

TaskDataset make_series(int n, int len, Rng& rng, const std::string& name = "t") {
  TaskDataset t;
  t.name = name;
  t.series = random_tensor({n, len}, rng, 10.0, 90.0);
  t.interval_minutes = 5;
  return t;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double cov = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (x[i] - mx) * (y[i] - my);
    vx += (x[i] - mx) * (x[i] - mx);
    vy += (y[i] - my) * (y[i] - my);
  }
  return cov / std::sqrt(vx * vy);
}

}  // namespace

TEST_CASE("series csv round-trips cell by cell") {
  Rng rng(600);
  TaskDataset src = make_series(2, 5, rng, "flow");
  const std::string path = temp_path("dgstmtl_series.csv");
  write_series_csv(path, src);
  TaskDataset back = load_series_csv(path, "flow");
  CHECK(back.series.shape() == Shape{2, 5});
  CHECK(back.interval_minutes == 5);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(back.series.at({i, j}) == src.series.at({i, j}));
}

TEST_CASE("series csv load errors") {
  const std::string path = temp_path("dgstmtl_bad.csv");
  {
    std::ofstream out(path);
    out << "timestamp,node_0,node_1\n";
  }
  CHECK_THROWS_AS(load_series_csv(path, "t"), DataError);

  {
    std::ofstream out(path);
    out << "timestamp,node_0\n0,1.5\n300,2.5\n900,3.5\n";  // gap jumps
  }
  try {
    load_series_csv(path, "t");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 4") != std::string::npos);
    CHECK(msg.find("600") != std::string::npos);
  }

  {
    std::ofstream out(path);
    out << "timestamp,node_0,node_1\n0,1.5,2.0\n300,2.5\n";  // ragged
  }
  CHECK_THROWS_AS(load_series_csv(path, "t"), DataError);

  {
    std::ofstream out(path);
    out << "timestamp,node_0,node_1\n0,1.5,\n300,2.5,3.0\n";  // missing cell
  }
  CHECK_THROWS_AS(load_series_csv(path, "t"), DataError);
}

TEST_CASE("split arithmetic: 88 samples at 6:2:2 give 52/18/18") {
  const auto counts = split_counts(88, {0.6, 0.2, 0.2});
  CHECK(counts[0] == 52);
  CHECK(counts[1] == 18);
  CHECK(counts[2] == 18);
}

TEST_CASE("window counts follow samples = L - T") {
  Rng rng(601);
  for (auto [len, t] : {std::array{100, 12}, std::array{40, 7}, std::array{13, 12}}) {
    TaskDataset task = make_series(2, len, rng);
    DatasetSplits s = window_and_split({task}, t, {0.6, 0.2, 0.2});
    CHECK(s.train.samples + s.val.samples + s.test.samples == len - t);
  }
}

TEST_CASE("a series one step longer than the history gives one train sample") {
  Rng rng(602);
  TaskDataset task = make_series(2, 13, rng);
  DatasetSplits s = window_and_split({task}, 12, {0.6, 0.2, 0.2});
  CHECK(s.train.samples == 1);
  CHECK(s.val.samples == 0);
  CHECK(s.test.samples == 0);
}

TEST_CASE("sample 0 input reconstructs columns [0, 12) exactly") {
  Rng rng(603);
  TaskDataset task = make_series(3, 100, rng);
  DatasetSplits s = window_and_split({task}, 12, {0.6, 0.2, 0.2});
  const Scaler& sc = s.scalers[0];
  Tensor x0 = sample_input(s.train, 0, 0);
  CHECK(x0.shape() == Shape{3, 12, 1});
  for (int node = 0; node < 3; ++node)
    for (int t = 0; t < 12; ++t)
      CHECK(denormalize_value(x0.at({node, t, 0}), sc) ==
            doctest::Approx(task.series.at({node, t})).epsilon(1e-12));
  // target of sample j is column j + 12
  Tensor y0 = sample_targets(s.train, 0);
  for (int node = 0; node < 3; ++node)
    CHECK(denormalize_value(y0.at({0, node, 0}), sc) ==
          doctest::Approx(task.series.at({node, 12})).epsilon(1e-12));
}

TEST_CASE("splits are contiguous, ordered and disjoint") {
  Rng rng(604);
  TaskDataset task = make_series(2, 60, rng);
  DatasetSplits s = window_and_split({task}, 12, {0.6, 0.2, 0.2});
  const Scaler& sc = s.scalers[0];
  // val sample 0 must start right after the last train sample start
  Tensor last_train = sample_input(s.train, 0, s.train.samples - 1);
  Tensor first_val = sample_input(s.val, 0, 0);
  CHECK(denormalize_value(first_val.at({0, 0, 0}), sc) ==
        doctest::Approx(task.series.at({0, s.train.samples})).epsilon(1e-12));
  CHECK(denormalize_value(last_train.at({0, 0, 0}), sc) ==
        doctest::Approx(task.series.at({0, s.train.samples - 1})).epsilon(1e-12));
}

TEST_CASE("normalize/denormalize round-trip and two-pass statistics") {
  Rng rng(605);
  TaskDataset task = make_series(2, 50, rng);
  DatasetSplits s = window_and_split({task}, 12, {0.6, 0.2, 0.2});
  const Scaler& sc = s.scalers[0];

  // round-trip
  for (double v : {12.5, -3.25, 88.0})
    CHECK(std::abs(denormalize_value(normalize_value(v, sc), sc) - v) < 1e-12);

  // the scaler matches a direct two-pass oracle over the train columns
  const int cols = train_column_count(50, 12, {0.6, 0.2, 0.2});
  double mean = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < cols; ++j) mean += task.series.at({i, j});
  mean /= 2.0 * cols;
  double ss = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < cols; ++j) {
      const double d = task.series.at({i, j}) - mean;
      ss += d * d;
    }
  CHECK(sc.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(sc.std_dev == doctest::Approx(std::sqrt(ss / (2.0 * cols))).epsilon(1e-12));
}

TEST_CASE("constant series fall back to unit scale with a warning") {
  TaskDataset task;
  task.name = "flat";
  task.series = Tensor::full({2, 30}, 4.0);
  task.interval_minutes = 5;
  DatasetSplits s = window_and_split({task}, 12, {0.6, 0.2, 0.2});
  CHECK(s.scalers[0].fallback);
  CHECK(s.scalers[0].std_dev == 1.0);
  REQUIRE(s.warnings.size() == 1);
  for (double v : s.train.inputs[0].values()) CHECK(v == 0.0);
}

TEST_CASE("synth_coupled is deterministic per seed") {
  const SynthResult a = synth_coupled(4, 120, 0.8, 42);
  const SynthResult b = synth_coupled(4, 120, 0.8, 42);
  const SynthResult c = synth_coupled(4, 120, 0.8, 43);
  CHECK(std::vector<double>(a.task_a.series.values().begin(),
                            a.task_a.series.values().end()) ==
        std::vector<double>(b.task_a.series.values().begin(),
                            b.task_a.series.values().end()));
  CHECK(std::vector<double>(a.task_b.series.values().begin(),
                            a.task_b.series.values().end()) ==
        std::vector<double>(b.task_b.series.values().begin(),
                            b.task_b.series.values().end()));
  CHECK(test_support::max_abs_diff(a.task_a.series.values(),
                                   c.task_a.series.values()) > 1e-9);
}

TEST_CASE("synth_coupled coupling = 1 makes task B an exact function of task A") {
  const SynthResult s = synth_coupled(4, 300, 1.0, 7);
  for (int node = 0; node < 4; ++node) {
    std::vector<double> a(300), b(300);
    for (int t = 0; t < 300; ++t) {
      a[std::size_t(t)] = s.task_a.series.at({node, t});
      b[std::size_t(t)] = s.task_b.series.at({node, t});
    }
    CHECK(std::abs(std::abs(pearson(a, b)) - 1.0) < 1e-9);
  }
}

TEST_CASE("synth_coupled coupling = 0 stays at the noise floor over 10 seeds") {
  double mean_abs = 0.0;
  double max_abs = 0.0;
  int count = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SynthResult s = synth_coupled(4, 2000, 0.0, seed);
    for (int node = 0; node < 4; ++node) {
      std::vector<double> a(2000), b(2000);
      for (int t = 0; t < 2000; ++t) {
        a[std::size_t(t)] = s.task_a.series.at({node, t});
        b[std::size_t(t)] = s.task_b.series.at({node, t});
      }
      const double r = std::abs(pearson(a, b));
      mean_abs += r;
      max_abs = std::max(max_abs, r);
      ++count;
    }
  }
  mean_abs /= count;
  // sample correlation of independent series has sd ~ 1/sqrt(2000) = 0.022
  CHECK(mean_abs < 0.05);
  CHECK(max_abs < 0.15);
}

TEST_CASE("synth_coupled emits the ring edge list") {
  const SynthResult s = synth_coupled(5, 50, 0.5, 1);
  REQUIRE(s.edges.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(s.edges[std::size_t(i)].first == i);
    CHECK(s.edges[std::size_t(i)].second == (i + 1) % 5);
  }
  CHECK_THROWS_AS(synth_coupled(1, 50, 0.5, 1), InputError);
}

TEST_CASE("scalers and correlation prior ignore test-region perturbations") {
  Rng rng(606);
  TaskDataset task = make_series(3, 80, rng);
  const std::array<double, 3> ratios{0.6, 0.2, 0.2};
  const int history = 12;

  DatasetSplits before = window_and_split({task}, history, ratios);
  Tensor corr_before =
      build_st_correlation(train_columns(task, history, ratios), 0.3).matrix;

  // perturb every column past the train-visible region
  const int visible = train_column_count(80, history, ratios);
  TaskDataset mutated = task;
  mutated.series = task.series.detach();
  for (int i = 0; i < 3; ++i)
    for (int j = visible; j < 80; ++j)
      mutated.series.values_mut()[std::size_t(i) * 80 + j] += rng.uniform(5, 50);

  DatasetSplits after = window_and_split({mutated}, history, ratios);
  Tensor corr_after =
      build_st_correlation(train_columns(mutated, history, ratios), 0.3).matrix;

  CHECK(before.scalers[0].mean == after.scalers[0].mean);
  CHECK(before.scalers[0].std_dev == after.scalers[0].std_dev);
  CHECK(test_support::max_abs_diff(corr_before.values(), corr_after.values()) ==
        0.0);
  // and the train inputs themselves are untouched
  CHECK(test_support::max_abs_diff(before.train.inputs[0].values(),
                                   after.train.inputs[0].values()) == 0.0);
}

TEST_CASE("manifest round-trip with path resolution") {
  Rng rng(607);
  const fs::path dir = fs::temp_directory_path() / "dgstmtl_manifest_test";
  fs::create_directories(dir);
  TaskDataset flow = make_series(2, 30, rng, "flow");
  TaskDataset speed = make_series(2, 30, rng, "speed");
  write_series_csv((dir / "flow.csv").string(), flow);
  write_series_csv((dir / "speed.csv").string(), speed);
  write_edge_list_csv((dir / "edges.csv").string(), {{0, 1}});

  Manifest m;
  m.tasks = {{"flow", "flow.csv"}, {"speed", "speed.csv"}};
  m.edges_path = "edges.csv";
  m.interval_minutes = 5;
  m.ratios = {0.6, 0.2, 0.2};
  write_manifest((dir / "manifest.txt").string(), m);

  Manifest loaded = load_manifest((dir / "manifest.txt").string());
  CHECK(loaded.tasks.size() == 2);
  CHECK(loaded.tasks[0].first == "flow");
  CHECK(loaded.interval_minutes == 5);

  LoadedData data = load_from_manifest(loaded);
  CHECK(data.n == 2);
  CHECK(data.tasks.size() == 2);
  CHECK(data.edges.size() == 1);
}

TEST_CASE("too-short series and bad ratios are rejected") {
  Rng rng(608);
  TaskDataset task = make_series(2, 12, rng);
  CHECK_THROWS_AS(window_and_split({task}, 12, {0.6, 0.2, 0.2}), InputError);
  TaskDataset ok = make_series(2, 30, rng);
  CHECK_THROWS_AS(window_and_split({ok}, 12, {0.5, 0.2, 0.2}), InputError);
}
