#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "clab/error.hpp"
#include "clab/order_test.hpp"
#include "clab/rng.hpp"
#include "clab/synth.hpp"

using namespace clab;

namespace {

// Two-sided Student-t tail by Simpson integration of the density on [0, |t|].
double t_two_sided_oracle(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int steps = 20000;
  const double h = std::abs(t) / steps;
  double s = pdf(0) + pdf(std::abs(t));
  for (int i = 1; i < steps; ++i) s += (i % 2 ? 4 : 2) * pdf(i * h);
  return 1.0 - 2.0 * s * h / 3.0;
}

// Node i follows nodes 0..i-1, so in-degrees 0..n-1 are distinct.
DirectedGraph ladder(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = 0; j < i; ++j) edges.emplace_back(i, j);
  }
  return DirectedGraph::from_edges(n, edges);
}

}  // namespace

TEST_CASE("average ranks share tied positions") {
  const std::vector<double> v = {10, 20, 20, 30, 5};
  CHECK(average_ranks(v) == std::vector<double>{2, 3.5, 3.5, 5, 1});
}

TEST_CASE("descending-degree adoption order gives rho of minus one") {
  const auto g = ladder(30);
  AdoptionLog log;
  log.last_day = 29;
  for (NodeId i = 0; i < 30; ++i) log.records.push_back({i, static_cast<int>(29 - i)});
  const auto result = degree_order_test(g, log);
  CHECK(result.rho == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(result.p_value == 0.0);
  CHECK(result.n == 30);
  CHECK(degree_order_test(g, log, DegreeKind::Out).rho == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("random adoption order is rarely significant") {
  SynthConfig cfg;
  cfg.n_nodes = 500;
  cfg.seed = 1;
  const auto g = gen_graph(cfg).graph;
  // Ten blocks of 100 permutations; the median block must clear 90 and the
  // pooled size must sit near the nominal 5%.
  std::vector<int> block_counts;
  int total = 0;
  for (std::uint64_t block = 0; block < 10; ++block) {
    int not_significant = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
      std::vector<int> days(500);
      std::iota(days.begin(), days.end(), 0);
      Rng rng(block * 100 + k);
      rng.shuffle(days.begin(), days.end());
      AdoptionLog log;
      log.last_day = 499;
      for (NodeId i = 0; i < 500; ++i) log.records.push_back({i, days[i]});
      const auto result = degree_order_test(g, log);
      CHECK(std::abs(result.rho) < 0.2);
      not_significant += result.p_value > 0.05;
    }
    block_counts.push_back(not_significant);
    total += not_significant;
  }
  std::sort(block_counts.begin(), block_counts.end());
  CHECK(block_counts[4] >= 90);
  CHECK(total >= 930);
  CHECK(total <= 970);
}

TEST_CASE("rho is invariant under strictly monotone transforms") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(40), y(40), fx(40), gy(40);
    for (std::size_t i = 0; i < 40; ++i) {
      x[i] = std::floor(rng.uniform() * 15);
      y[i] = rng.uniform() * 10 + 0.5 * x[i];
      fx[i] = std::exp(x[i] / 3.0) + 7.0;
      gy[i] = -1.0 / (y[i] + 1.0);
    }
    const double rho = spearman_rho(x, y);
    CHECK(spearman_rho(fx, gy) == doctest::Approx(rho).epsilon(1e-12));
  }
}

TEST_CASE("reversing adoption order negates rho") {
  Rng rng(3);
  std::vector<double> degree(60), day(60), reversed(60);
  for (std::size_t i = 0; i < 60; ++i) {
    degree[i] = std::floor(rng.uniform() * 20);
    day[i] = static_cast<double>(i);
    reversed[i] = static_cast<double>(59 - i);
  }
  CHECK(spearman_rho(degree, reversed) == doctest::Approx(-spearman_rho(degree, day)).epsilon(1e-12));
}

TEST_CASE("p-value matches a numerically integrated t tail") {
  for (const auto& [rho, n] : std::vector<std::pair<double, std::size_t>>{{0.6, 10}, {-0.3, 40}, {0.05, 500}, {0.9, 5}}) {
    const double t = rho * std::sqrt((n - 2.0) / (1.0 - rho * rho));
    CHECK(spearman_p_value(rho, n) == doctest::Approx(t_two_sided_oracle(t, n - 2.0)).epsilon(1e-7));
  }
  CHECK(spearman_p_value(1.0, 10) == 0.0);
  CHECK(spearman_p_value(0.0, 10) == doctest::Approx(1.0));
}

TEST_CASE("constant input or too few values is rejected") {
  const std::vector<double> same(10, 3.0), other = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK_THROWS_AS(spearman_rho(same, other), DataError);
  CHECK_THROWS_AS(spearman_rho(std::vector<double>{1, 2}, std::vector<double>{2, 1}), DataError);
}

TEST_CASE("degree kinds round-trip") {
  for (auto k : {DegreeKind::In, DegreeKind::Out, DegreeKind::Total}) CHECK(parse_degree_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_degree_kind("sideways"), UsageError);
}
