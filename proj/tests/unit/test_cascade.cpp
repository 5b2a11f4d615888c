#include <bit>
#include <cmath>
#include <cstring>
#include <queue>
#include <set>
#include <unordered_set>
#include <vector>

#include "doctest.h"

#include "clab/cascade.hpp"
#include "clab/error.hpp"
#include "clab/features.hpp"
#include "clab/rng.hpp"
#include "clab/synth.hpp"
#include "support.hpp"

using namespace clab;

namespace {

MechanismParams uniform_params(std::size_t n, double beta, double phi, double activity, double r) {
  MechanismParams p;
  p.beta.assign(n, beta);
  p.phi.assign(n, phi);
  p.activity.assign(n, activity);
  p.r = r;
  return p;
}

DirectedGraph test_graph(std::size_t n, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_nodes = n;
  cfg.mean_degree = 10;
  cfg.seed = seed;
  return gen_graph(cfg).graph;
}

std::string feature_key(const CascadeEvent& e) {
  auto x = e.features.to_array();
  for (auto& v : x) v = v == 0.0 ? 0.0 : v;
  std::string key(reinterpret_cast<const char*>(x.data()), sizeof(x));
  key.push_back(static_cast<char>(e.mechanism));
  return key;
}

}  // namespace

TEST_CASE("simple rule arithmetic") {
  CHECK(simple_adoption_probability(0.089, 2) == doctest::Approx(0.170079).epsilon(1e-12));
  CHECK(simple_adoption_probability(0.5, 0) == 0.0);
  CHECK(simple_adoption_probability(1.0, 3) == 1.0);
}

TEST_CASE("simple rule is monotone in beta and exposure") {
  for (std::size_t m = 0; m < 30; ++m) {
    double prev = -1.0;
    for (int b = 1; b <= 100; ++b) {
      const double p = simple_adoption_probability(b / 100.0, m);
      CHECK(p >= prev);
      CHECK(simple_adoption_probability(b / 100.0, m + 1) >= p);
      prev = p;
    }
  }
}

TEST_CASE("complex rule threshold") {
  CHECK(complex_fires(2, 10, 0.146));
  CHECK_FALSE(complex_fires(1, 10, 0.146));
  CHECK(complex_fires(3, 20, 0.15));
  CHECK_FALSE(complex_fires(0, 0, 0.0));
  CHECK_FALSE(complex_fires(5, 5, 1.01));
}

TEST_CASE("inert node has zero adoption probability") {
  auto p = uniform_params(1, 0.5, 0.5, 1.0, 0.0);
  CHECK(simple_adoption_probability(p.beta[0], 0) == 0.0);
  CHECK(shock_adoption_probability(p, 100) == 0.0);
  p.shocks = ShockSchedule({{10, 1.0, 0.5}});
  p.shock_prob_at_peak = 0.3;
  CHECK(shock_adoption_probability(p, 9) == 0.0);
  CHECK(shock_adoption_probability(p, 10) == doctest::Approx(0.3));
  CHECK(shock_adoption_probability(p, 13) == doctest::Approx(0.3 * 0.5));
}

TEST_CASE("no ignition means no events") {
  const auto g = test_graph(300, 1);
  const auto p = uniform_params(300, 0.3, 0.1, 0.5, 0.0);
  CascadeConfig cfg;
  cfg.horizon_days = 50;
  const auto run = run_realization(g, p, 3, cfg);
  CHECK(run.events.empty());
  CHECK(run.days_simulated == 50);
  CHECK_FALSE(run.reached_stop_fraction);
}

TEST_CASE("saturating background rate adopts everyone on day zero") {
  const auto g = test_graph(200, 2);
  const auto p = uniform_params(200, 0.3, 0.1, 1.0, 1.0);
  const auto run = run_realization(g, p, 5);
  CHECK(run.events.size() == 200);
  CHECK(run.days_simulated == 1);
  CHECK(run.reached_stop_fraction);
  for (const auto& e : run.events) {
    CHECK(e.day == 0);
    CHECK(e.mechanism == Mechanism::Spontaneous);
    CHECK(e.fired == mechanism_bit(Mechanism::Spontaneous));
  }
}

TEST_CASE("fixed seed runs are identical") {
  const auto g = test_graph(500, 3);
  const auto p = reference_params(500, 3);
  CascadeConfig cfg;
  cfg.random_seeds = 5;
  const auto a = run_realization(g, p, 42, cfg);
  const auto b = run_realization(g, p, 42, cfg);
  CHECK(a.events == b.events);
  CHECK(a.adoption_days == b.adoption_days);
  CHECK(a.seeds == b.seeds);
}

TEST_CASE("adoption is absorbing and labels are among fired rules") {
  const auto g = test_graph(600, 4);
  const auto p = reference_params(600, 4);
  CascadeConfig cfg;
  cfg.random_seeds = 6;
  const auto run = run_realization(g, p, 8, cfg);
  for (std::size_t d = 1; d < run.adopted_after_day.size(); ++d) {
    CHECK(run.adopted_after_day[d] >= run.adopted_after_day[d - 1]);
  }
  std::set<NodeId> seen(run.seeds.begin(), run.seeds.end());
  for (const auto& e : run.events) {
    CHECK(seen.insert(e.node).second);
    CHECK((e.fired & mechanism_bit(e.mechanism)) != 0);
    CHECK(run.adoption_days[e.node] == e.day);
  }
}

TEST_CASE("without shocks and background every adopter was exposed") {
  const auto g = test_graph(800, 5);
  auto p = reference_params(800, 5);
  p.r = 0.0;
  p.shocks = ShockSchedule();
  p.shock_prob_at_peak = 0.0;
  CascadeConfig cfg;
  cfg.random_seeds = 8;
  const auto run = run_realization(g, p, 13, cfg);
  REQUIRE(!run.events.empty());
  for (const auto& e : run.events) {
    std::size_t m = 0;
    for (NodeId v : g.followees(e.node)) m += run.adoption_days[v] < e.day;
    CHECK(m >= 1);
    CHECK(e.features.active_influences == static_cast<double>(m));
  }
}

TEST_CASE("complex rule never fires without followees") {
  std::vector<std::pair<NodeId, NodeId>> edges;
  // Nodes 0..9 follow node 10; node 10 and 11 follow nobody.
  for (NodeId i = 0; i < 10; ++i) edges.emplace_back(i, 10);
  const auto g = DirectedGraph::from_edges(12, edges);
  const auto p = uniform_params(12, 0.5, 0.01, 1.0, 0.0);
  CascadeConfig cfg;
  cfg.seeds = {10};
  cfg.stop_fraction = 1.0;
  cfg.horizon_days = 20;
  cfg.enabled = mechanism_bit(Mechanism::Complex);
  const auto run = run_realization(g, p, 1, cfg);
  CHECK(run.events.size() == 10);
  CHECK(run.adoption_days[11] == kNever);
  for (const auto& e : run.events) CHECK(e.features.degree > 0);
}

TEST_CASE("simple cascade with certain transmission follows BFS layers") {
  const auto g = test_graph(400, 6);
  const auto p = uniform_params(400, 1.0, 0.5, 1.0, 0.0);
  CascadeConfig cfg;
  cfg.seeds = {0};
  cfg.stop_fraction = 1.0;
  cfg.horizon_days = 400;
  cfg.enabled = mechanism_bit(Mechanism::Simple);
  const auto run = run_realization(g, p, 2, cfg);
  std::vector<int> dist(400, kNever);
  std::queue<NodeId> q;
  dist[0] = 0;
  q.push(0);
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    for (NodeId v : g.followers(u)) {
      if (dist[v] == kNever) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  CHECK(run.adoption_days == dist);
}

TEST_CASE("ensemble dedup matches a hash-set oracle") {
  const auto g = test_graph(1000, 7);
  const auto p = reference_params(1000, 7);
  CascadeConfig cfg;
  cfg.random_seeds = 10;
  const auto result = run_ensemble(g, p, 10, 99, cfg, 1);
  std::unordered_set<std::string> seen;
  std::vector<CascadeEvent> kept;
  std::array<std::size_t, kMechanismCount> before{};
  for (std::uint32_t r = 0; r < 10; ++r) {
    const auto run = run_realization(g, p, derive_seed(99, r), cfg, r);
    for (const auto& e : run.events) {
      ++before[static_cast<std::size_t>(e.mechanism)];
      if (seen.insert(feature_key(e)).second) kept.push_back(e);
    }
  }
  CHECK(result.counts_before == before);
  CHECK(result.events.size() == kept.size());
  CHECK(result.events == kept);
  std::size_t after = 0;
  for (auto c : result.counts_after) after += c;
  CHECK(after == kept.size());
}

TEST_CASE("single-realization ensemble only removes exact duplicates") {
  const auto g = test_graph(500, 8);
  const auto p = reference_params(500, 8);
  CascadeConfig cfg;
  cfg.random_seeds = 5;
  const auto one = run_ensemble(g, p, 1, 4, cfg, 1);
  const auto run = run_realization(g, p, derive_seed(4, 0), cfg, 0);
  std::unordered_set<std::string> keys;
  for (const auto& e : run.events) keys.insert(feature_key(e));
  CHECK(one.events.size() == keys.size());
  std::size_t raw = 0;
  for (auto c : one.counts_before) raw += c;
  CHECK(raw == run.events.size());
}

TEST_CASE("ensemble results do not depend on thread count") {
  const auto g = test_graph(600, 9);
  const auto p = reference_params(600, 9);
  CascadeConfig cfg;
  cfg.random_seeds = 5;
  const auto a = run_ensemble(g, p, 6, 17, cfg, 1);
  const auto b = run_ensemble(g, p, 6, 17, cfg, 4);
  CHECK(a.events == b.events);
  CHECK(a.counts_before == b.counts_before);
  CHECK(a.days_simulated == b.days_simulated);
}

TEST_CASE("events survive a JSON-lines round trip") {
  clab::test::TempDir dir;
  const auto g = test_graph(400, 10);
  const auto p = reference_params(400, 10);
  CascadeConfig cfg;
  cfg.random_seeds = 5;
  const auto run = run_realization(g, p, 1, cfg);
  REQUIRE(!run.events.empty());
  write_events_jsonl(run.events, g, dir / "e.jsonl");
  const auto back = read_events_jsonl(dir / "e.jsonl");
  REQUIRE(back.size() == run.events.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].features == run.events[i].features);
    CHECK(back[i].mechanism == run.events[i].mechanism);
  }
}

TEST_CASE("mechanism names round-trip") {
  for (auto m : kMechanisms) CHECK(parse_mechanism(to_string(m)) == m);
  CHECK_THROWS_AS(parse_mechanism("osmosis"), DataError);
}
