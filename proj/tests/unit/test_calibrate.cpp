#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "doctest.h"

#include "clab/calibrate.hpp"
#include "clab/error.hpp"
#include "clab/rng.hpp"
#include "clab/synth.hpp"
#include "support.hpp"

using namespace clab;

namespace {

// Ego 0 follows nodes 1..k; the first `adopted` of them adopt on days
// 0..adopted-1 and the ego adopts on day `adopted`.
struct EgoWorld {
  DirectedGraph g;
  AdoptionLog log;
};

EgoWorld ego_world(NodeId k, NodeId adopted) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId v = 1; v <= k; ++v) edges.emplace_back(0, v);
  EgoWorld w{DirectedGraph::from_edges(k + 1, edges), {}};
  for (NodeId v = 1; v <= adopted; ++v) w.log.records.push_back({v, static_cast<int>(v - 1)});
  w.log.records.push_back({0, static_cast<int>(adopted)});
  w.log.first_day = 0;
  w.log.last_day = 30;
  return w;
}

// Scans every edge to recount eve exposure for each adopter.
std::vector<std::size_t> exposure_oracle(const DirectedGraph& g, const std::vector<int>& days) {
  std::vector<std::size_t> m(g.node_count(), 0);
  for (const auto& [s, t] : g.edges()) {
    if (days[s] != kNever && days[t] < days[s]) ++m[s];
  }
  return m;
}

}  // namespace

TEST_CASE("four adopted followees give beta one quarter") {
  const auto w = ego_world(4, 4);
  const auto pool = calibrate_transmission(w.g, w.log);
  CHECK(pool.values == std::vector<double>{0.25});
  CHECK(eve_exposure(w.g, w.log.adoption_days(5), 0) == 4);
}

TEST_CASE("one adopted followee gives beta one") {
  const auto w = ego_world(6, 1);
  CHECK(calibrate_transmission(w.g, w.log).values == std::vector<double>{1.0});
}

TEST_CASE("three of twenty followees give phi 0.15") {
  const auto w = ego_world(20, 3);
  const auto pool = calibrate_thresholds(w.g, w.log);
  REQUIRE(pool.values.size() == 1);
  CHECK(pool.values[0] == doctest::Approx(0.15).epsilon(1e-15));
}

TEST_CASE("adopters without followees are excluded from the pools") {
  std::vector<std::pair<NodeId, NodeId>> edges = {{0, 1}, {0, 2}};
  const auto g = DirectedGraph::from_edges(4, edges);
  AdoptionLog log;
  log.records = {{1, 0}, {3, 0}, {0, 2}};
  log.last_day = 5;
  CHECK(calibrate_thresholds(g, log).values == std::vector<double>{0.5});
  CHECK(calibrate_transmission(g, log).values == std::vector<double>{1.0});
}

TEST_CASE("every adopter at half saturation gives a constant pool") {
  std::vector<std::pair<NodeId, NodeId>> edges;
  AdoptionLog log;
  log.last_day = 10;
  // Pairs of followees per ego: one adopts early, one never does.
  const NodeId egos = 8;
  for (NodeId e = 0; e < egos; ++e) {
    const NodeId early = egos + 2 * e, late = egos + 2 * e + 1;
    edges.emplace_back(e, early);
    edges.emplace_back(e, late);
    log.records.push_back({early, 0});
    log.records.push_back({e, 1 + static_cast<int>(e % 3)});
  }
  const auto g = DirectedGraph::from_edges(3 * egos, edges);
  const auto pool = calibrate_thresholds(g, log);
  CHECK(pool.values.size() == egos);
  for (double v : pool.values) CHECK(v == 0.5);
  CHECK(pool.summary.mean == 0.5);
}

TEST_CASE("shock-period adopters are excluded") {
  auto w = ego_world(4, 4);
  w.log.shock_periods.push_back({4, 4, 4, 10});
  CHECK_THROWS_AS(calibrate_transmission(w.g, w.log), DataError);
}

TEST_CASE("background rate from three zero-exposure adopters") {
  const auto g = DirectedGraph::from_edges(503, {});
  AdoptionLog log;
  log.first_day = 0;
  log.last_day = 99;
  log.records = {{0, 0}, {1, 0}, {2, 0}};
  const auto r = calibrate_background(g, log);
  CHECK(r.zero_exposure_adopters == 3);
  CHECK(r.susceptible_days == 50000);
  CHECK(r.r == doctest::Approx(6.0e-5).epsilon(1e-12));
}

TEST_CASE("no zero-exposure adopters gives zero rate") {
  const auto w = ego_world(3, 3);
  AdoptionLog only_exposed;
  only_exposed.last_day = 10;
  // Node 1 adopts inside a shock period, node 0 is exposed to it.
  only_exposed.records = {{1, 2}, {0, 4}};
  only_exposed.shock_periods.push_back({2, 2, 2, 500});
  CHECK(calibrate_background(w.g, only_exposed).r == 0.0);
}

TEST_CASE("pools match a brute-force recount on a synthetic cascade") {
  SynthConfig cfg;
  cfg.n_nodes = 800;
  cfg.mean_degree = 8;
  cfg.seed = 4;
  const auto world = gen_graph(cfg);
  auto params = reference_params(800, 4);
  params.shocks = ShockSchedule();
  params.shock_prob_at_peak = 0;
  CascadeConfig cc;
  cc.random_seeds = 10;
  cc.horizon_days = 200;
  const auto log = gen_pure_cascade(world.graph, Mechanism::Simple, params, 9, cc);
  REQUIRE(log.records.size() > 20);
  const auto days = log.adoption_days(800);
  const auto m = exposure_oracle(world.graph, days);
  std::vector<double> beta, phi;
  for (NodeId i = 0; i < 800; ++i) {
    if (days[i] == kNever || m[i] == 0) continue;
    beta.push_back(1.0 / static_cast<double>(m[i]));
    phi.push_back(static_cast<double>(m[i]) / static_cast<double>(world.graph.in_degree(i)));
  }
  CHECK(calibrate_transmission(world.graph, log).values == beta);
  CHECK(calibrate_thresholds(world.graph, log).values == phi);
  for (double v : beta) CHECK((v > 0.0 && v <= 1.0));
  for (double v : phi) CHECK((v > 0.0 && v <= 1.0));

  std::size_t zero = 0;
  std::int64_t susceptible = 0;
  for (NodeId i = 0; i < 800; ++i) {
    if (days[i] == kNever) {
      susceptible += log.last_day - log.first_day + 1;
    } else {
      susceptible += days[i] - log.first_day;
      if (m[i] == 0) ++zero;
    }
  }
  const auto r = calibrate_background(world.graph, log);
  CHECK(r.zero_exposure_adopters == zero);
  CHECK(r.susceptible_days == susceptible);
}

TEST_CASE("background rate is invariant to relabeling node ids") {
  const std::size_t n = 200;
  const auto raw = clab::test::random_edges(n, 0.03, 21);
  const auto g = DirectedGraph::from_edges(n, raw);
  Rng rng(2);
  AdoptionLog log;
  log.last_day = 60;
  for (NodeId i = 0; i < n; ++i) {
    if (rng.bernoulli(0.3)) log.records.push_back({i, static_cast<int>(rng.below(61))});
  }
  std::vector<NodeId> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm.begin(), perm.end());
  std::vector<std::pair<NodeId, NodeId>> relabeled;
  for (const auto& [s, t] : raw) relabeled.emplace_back(perm[s], perm[t]);
  const auto h = DirectedGraph::from_edges(n, relabeled);
  AdoptionLog log2 = log;
  for (auto& r : log2.records) r.node = perm[r.node];
  const auto a = calibrate_background(g, log);
  const auto b = calibrate_background(h, log2);
  CHECK(a.r == b.r);
  CHECK(a.zero_exposure_adopters == b.zero_exposure_adopters);
  CHECK(a.susceptible_days == b.susceptible_days);
}

TEST_CASE("removing shock-period adopters never grows the beta pool") {
  const std::size_t n = 300;
  const auto g = clab::test::random_graph(n, 0.04, 8);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    AdoptionLog log;
    log.last_day = 40;
    log.shock_periods.push_back({10, 14, 12, 200});
    for (NodeId i = 0; i < n; ++i) {
      if (rng.bernoulli(0.5)) log.records.push_back({i, static_cast<int>(rng.below(41))});
    }
    AdoptionLog trimmed = log;
    std::erase_if(trimmed.records, [&](const Adoption& a) { return log.in_shock_period(a.day); });
    CHECK(calibrate_transmission(g, trimmed).values.size() <= calibrate_transmission(g, log).values.size());
  }
}

TEST_CASE("equal post counts give the target activity") {
  const std::vector<double> c(50, 12.0);
  for (double a : calibrate_activity(c)) CHECK(a == doctest::Approx(0.032).epsilon(1e-12));
}

TEST_CASE("activity follows log1p before rescaling") {
  const std::vector<double> c = {0.0, std::exp(1.0) - 1.0};
  const auto a = calibrate_activity(c);
  CHECK(a[1] == doctest::Approx(0.064).epsilon(1e-12));
  CHECK(a[0] == 1e-6);

  Rng rng(3);
  std::vector<double> counts(500);
  for (auto& v : counts) v = std::floor(std::exp(4.0 * rng.uniform()));
  std::vector<double> doubled(counts);
  for (auto& v : doubled) v *= 2;
  for (const auto* src : {&counts, &doubled}) {
    std::vector<double> raw(src->size());
    std::transform(src->begin(), src->end(), raw.begin(), [](double x) { return std::log1p(x); });
    const double s = 0.032 * raw.size() / std::accumulate(raw.begin(), raw.end(), 0.0);
    const auto got = calibrate_activity(*src);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CHECK(got[i] == doctest::Approx(std::clamp(s * raw[i], 1e-6, 1.0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("activity rejects negative or all-zero counts") {
  CHECK_THROWS_AS(calibrate_activity(std::vector<double>{1.0, -1.0}), DataError);
  CHECK_THROWS_AS(calibrate_activity(std::vector<double>{0.0, 0.0}), DataError);
}

TEST_CASE("params JSON broadcasts scalars and resamples pools") {
  nlohmann::json j = {{"beta", 0.2},
                      {"phi_pool", {0.1, 0.3}},
                      {"activity", {0.5, 0.5, 0.5}},
                      {"r", 1e-4},
                      {"shocks", {{{"tau", 3}, {"gamma", 1.0}, {"alpha", 0.5}}}},
                      {"shock_prob_at_peak", 0.1}};
  const auto p = MechanismParams::from_json(j, 3, 7);
  CHECK(p.beta == std::vector<double>{0.2, 0.2, 0.2});
  for (double v : p.phi) CHECK((v == 0.1 || v == 0.3));
  CHECK(p.r == 1e-4);
  CHECK(p.shocks.shocks().size() == 1);
  const auto again = MechanismParams::from_json(j, 3, 7);
  CHECK(again.phi == p.phi);
  const auto back = MechanismParams::from_json(p.to_json(), 3, 0);
  CHECK(back.beta == p.beta);
  CHECK(back.phi == p.phi);
  CHECK(back.activity == p.activity);

  nlohmann::json bad = j;
  bad["activity"] = {0.5, 0.5};
  CHECK_THROWS_AS(MechanismParams::from_json(bad, 3, 7), DataError);
  bad = j;
  bad["beta"] = 1.5;
  CHECK_THROWS_AS(MechanismParams::from_json(bad, 3, 7), DataError);
}

TEST_CASE("resampled pool values come from the pool") {
  const std::vector<double> pool = {0.1, 0.2, 0.7};
  const auto v = resample_pool(pool, 1000, 5);
  CHECK(v.size() == 1000);
  for (double x : v) CHECK(std::find(pool.begin(), pool.end(), x) != pool.end());
  CHECK(v == resample_pool(pool, 1000, 5));
}
