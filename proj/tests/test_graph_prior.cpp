#include <doctest.h>

#include <cmath>
#include <set>

#include "dgstmtl/graph_prior.hpp"
#include "dgstmtl/rng.hpp"
#include "test_support.hpp"

using namespace dgstmtl;
using test_support::random_tensor;

namespace {

// Independent oracle: adjacency via a set of normalized pairs.
Tensor adjacency_oracle(const std::vector<std::pair<int, int>>& edges, int n) {
  std::set<std::pair<int, int>> pairs;
  for (auto [a, b] : edges) {
    if (a == b) continue;
    pairs.insert({std::min(a, b), std::max(a, b)});
  }
  Tensor t = Tensor::zeros({n, n});
  auto v = t.values_mut();
  for (auto [a, b] : pairs) {
    v[std::size_t(a) * n + b] = 1.0;
    v[std::size_t(b) * n + a] = 1.0;
  }
  return t;
}

// Direct two-pass Pearson coefficient.
double pearson_oracle(std::span<const double> x, std::span<const double> y) {
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

Tensor row(const Tensor& series, int i) {
  const int len = series.extent(1);
  std::vector<double> out(static_cast<std::size_t>(len), 0.0);
  for (int j = 0; j < len; ++j) out[std::size_t(j)] = series.at({i, j});
  return Tensor::from_data({len}, std::move(out));
}

}  // namespace

TEST_CASE("build_physical trivial cases") {
  Tensor empty = build_physical({}, 3);
  for (double v : empty.values()) CHECK(v == 0.0);

  Tensor pair = build_physical({{0, 1}}, 2);
  CHECK(pair.at({0, 0}) == 0);
  CHECK(pair.at({0, 1}) == 1);
  CHECK(pair.at({1, 0}) == 1);
  CHECK(pair.at({1, 1}) == 0);
}

TEST_CASE("build_physical rejects out-of-range pairs naming them") {
  try {
    build_physical({{0, 5}}, 3);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("(0, 5)") != std::string::npos);
  }
}

TEST_CASE("build_physical matches the set-membership oracle") {
  // A PEMSD-style directed edge list with duplicates and both orientations.
  const std::vector<std::pair<int, int>> edges = {
      {0, 1}, {1, 0}, {1, 2}, {3, 4}, {4, 3}, {2, 4}, {2, 4}, {0, 3}};
  Tensor got = build_physical(edges, 5);
  Tensor want = adjacency_oracle(edges, 5);
  CHECK(test_support::max_abs_diff(got.values(), want.values()) == 0.0);
}

TEST_CASE("build_st_correlation trivial sign cases") {
  // two identical rows -> r = 1
  Tensor series = Tensor::from_data({2, 4}, {1, 2, 3, 4, 1, 2, 3, 4});
  auto res = build_st_correlation(series, 0.9);
  CHECK(res.matrix.at({0, 1}) == 1.0);
  CHECK(res.matrix.at({0, 0}) == 0.0);

  // a row versus its negation -> |r| = 1 in abs mode, excluded in signed mode
  Tensor anti = Tensor::from_data({2, 4}, {1, 2, 3, 4, -1, -2, -3, -4});
  CHECK(build_st_correlation(anti, 0.9).matrix.at({0, 1}) == 1.0);
  CHECK(build_st_correlation(anti, 0.9, CorrelationMode::signed_).matrix.at({0, 1}) ==
        0.0);
}

TEST_CASE("build_st_correlation matches the two-pass Pearson oracle") {
  Rng rng(200);
  Tensor series = random_tensor({4, 40}, rng);
  const double threshold = 0.5;
  auto res = build_st_correlation(series, threshold);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      double want = 0.0;
      if (i != j) {
        const Tensor ri = row(series, i), rj = row(series, j);
        want = std::abs(pearson_oracle(ri.values(), rj.values())) >= threshold
                   ? 1.0
                   : 0.0;
      }
      CHECK(res.matrix.at({i, j}) == want);
    }
  }
}

TEST_CASE("build_st_correlation is invariant to positive per-row affine maps") {
  Rng rng(201);
  Tensor series = random_tensor({5, 30}, rng);
  auto base = build_st_correlation(series, 0.4);

  std::vector<double> mapped(series.values().begin(), series.values().end());
  for (int i = 0; i < 5; ++i) {
    const double a = rng.uniform(0.5, 3.0);
    const double b = rng.uniform(-10.0, 10.0);
    for (int j = 0; j < 30; ++j) {
      double& v = mapped[std::size_t(i) * 30 + j];
      v = a * v + b;
    }
  }
  auto after =
      build_st_correlation(Tensor::from_data({5, 30}, std::move(mapped)), 0.4);
  CHECK(test_support::max_abs_diff(base.matrix.values(), after.matrix.values()) <
        1e-12);
}

TEST_CASE("raising the threshold never adds correlation edges") {
  Rng rng(202);
  Tensor series = random_tensor({6, 25}, rng);
  double thresholds[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  auto prev = build_st_correlation(series, thresholds[0]).matrix;
  for (int t = 1; t < 5; ++t) {
    auto next = build_st_correlation(series, thresholds[t]).matrix;
    for (std::size_t i = 0; i < next.size(); ++i)
      CHECK(next.values()[i] <= prev.values()[i]);
    prev = next;
  }
}

TEST_CASE("constant rows give no edges and a recorded warning") {
  Tensor series = Tensor::from_data({2, 5}, {3, 3, 3, 3, 3, 1, 2, 3, 2, 1});
  auto res = build_st_correlation(series, 0.1);
  CHECK(res.constant_rows == std::vector<int>{0});
  for (double v : res.matrix.values()) CHECK(v == 0.0);
}

TEST_CASE("build_st_correlation preconditions") {
  CHECK_THROWS_AS(build_st_correlation(Tensor::zeros({2, 2}), 0.5), InputError);
}

TEST_CASE("assemble_prior N=1 scalar-blocks example") {
  BasicMatrices b;
  b.a_s = Tensor::from_data({1, 1}, {0});
  b.a_t = Tensor::from_data({1, 1}, {1});
  b.a_st = Tensor::from_data({1, 1}, {1});
  GraphPrior prior = assemble_prior(b, PriorLayout::P4);
  const std::vector<double> want = {0, 1, 0, 1, 0, 1, 0, 1, 0};
  CHECK(std::vector<double>(prior.a_p.values().begin(), prior.a_p.values().end()) ==
        want);
}

TEST_CASE("assemble_prior matches the explicit block-placement oracle for P1") {
  const int n = 2;
  BasicMatrices b;
  b.a_s = Tensor::from_data({2, 2}, {0, 1, 1, 0});  // complement of I
  b.a_t = identity_matrix(2);
  b.a_st = Tensor::from_data({2, 2}, {0, 1, 1, 0});
  GraphPrior prior = assemble_prior(b, PriorLayout::P1);

  // hand-assembled 3x3 block table for P1
  const Tensor zero = Tensor::zeros({2, 2});
  const Tensor* table[3][3] = {{&b.a_s, &b.a_t, &zero},
                               {&b.a_t, &b.a_s, &b.a_st},
                               {&zero, &b.a_st, &b.a_s}};
  for (int bi = 0; bi < 3; ++bi)
    for (int bj = 0; bj < 3; ++bj)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          CHECK(prior.a_p.at({bi * n + r, bj * n + c}) == table[bi][bj]->at({r, c}));
}

TEST_CASE("prior invariants across all four layouts") {
  const int n = 3;
  BasicMatrices b;
  b.a_s = adjacency_oracle({{0, 1}, {1, 2}}, n);
  b.a_t = identity_matrix(n);
  b.a_st = adjacency_oracle({{0, 2}}, n);

  for (PriorLayout layout :
       {PriorLayout::P1, PriorLayout::P2, PriorLayout::P3, PriorLayout::P4}) {
    GraphPrior prior = assemble_prior(b, layout);
    REQUIRE(prior.a_p.shape() == Shape{3 * n, 3 * n});

    // symmetry
    for (int i = 0; i < 3 * n; ++i)
      for (int j = 0; j < 3 * n; ++j)
        CHECK(prior.a_p.at({i, j}) == prior.a_p.at({j, i}));

    // diagonal blocks recover A_S exactly
    for (int blk = 0; blk < 3; ++blk)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
          CHECK(prior.a_p.at({blk * n + r, blk * n + c}) == b.a_s.at({r, c}));

    // non-adjacent time blocks are zero
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        CHECK(prior.a_p.at({r, 2 * n + c}) == 0.0);
        CHECK(prior.a_p.at({2 * n + r, c}) == 0.0);
      }
  }
}

TEST_CASE("or_combine unions 0/1 matrices") {
  Tensor a = Tensor::from_data({2, 2}, {1, 0, 0, 0});
  Tensor b = Tensor::from_data({2, 2}, {0, 1, 0, 0});
  Tensor u = or_combine({a, b});
  CHECK(u.values()[0] == 1);
  CHECK(u.values()[1] == 1);
  CHECK(u.values()[2] == 0);
}

TEST_CASE("edge list csv round-trip") {
  const std::string path = "/tmp/dgstmtl_test_edges.csv";
  const std::vector<std::pair<int, int>> edges = {{0, 1}, {2, 3}, {1, 4}};
  write_edge_list_csv(path, edges);
  CHECK(load_edge_list_csv(path) == edges);
}
