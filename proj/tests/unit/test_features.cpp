#include <vector>

#include "doctest.h"

#include "clab/cascade.hpp"
#include "clab/features.hpp"
#include "clab/rng.hpp"
#include "clab/synth.hpp"
#include "support.hpp"

using namespace clab;

namespace {

// Ego 0 with followees 1..12.
DirectedGraph twelve_followee_ego() {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId v = 1; v <= 12; ++v) edges.emplace_back(0, v);
  return DirectedGraph::from_edges(13, edges);
}

}  // namespace

TEST_CASE("hand-computed features of a twelve-followee ego") {
  const auto g = twelve_followee_ego();
  std::vector<int> days(13, kNever);
  days[3] = 5;
  days[7] = 8;
  days[9] = 9;  // same day as the ego, not yet visible
  days[0] = 9;
  const auto x = extract_features(g, days, ShockSchedule({{100, 1.0, 0.5}}), 0, 9);
  CHECK(x.active_influences == 2);
  CHECK(x.degree == 12);
  CHECK(x.peer_saturation == doctest::Approx(2.0 / 12.0).epsilon(1e-15));
  CHECK(x.exposure_duration == 4);
  CHECK(x.influence_recency == 1);
  CHECK(x.shock_intensity == 0);
  CHECK(x.shock_recency == -1);
}

TEST_CASE("never-exposed ego uses sentinels") {
  const auto g = twelve_followee_ego();
  std::vector<int> days(13, kNever);
  days[0] = 4;
  const auto x = extract_features(g, days, ShockSchedule(), 0, 4);
  CHECK(x.active_influences == 0);
  CHECK(x.degree == 12);
  CHECK(x.peer_saturation == 0);
  CHECK(x.exposure_duration == -1);
  CHECK(x.influence_recency == -1);
}

TEST_CASE("adopting on a shock peak day") {
  const auto g = twelve_followee_ego();
  std::vector<int> days(13, kNever);
  const auto x = extract_features(g, days, ShockSchedule({{20, 1.0, 0.8}}), 0, 20);
  CHECK(x.shock_intensity == 1.0);
  CHECK(x.shock_recency == 0);
}

TEST_CASE("node without followees has zero saturation") {
  const auto x = make_features(0, 0, 0, 0, ShockSchedule(), 3);
  CHECK(x.degree == 0);
  CHECK(x.peer_saturation == 0);
}

TEST_CASE("features ignore adoptions on or after the adoption day") {
  const auto g = clab::test::random_graph(120, 0.08, 4);
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> days(120, kNever);
    for (auto& d : days) {
      if (rng.bernoulli(0.6)) d = static_cast<int>(rng.below(30));
    }
    const auto u = static_cast<NodeId>(rng.below(120));
    const int t = 10 + static_cast<int>(rng.below(10));
    const auto before = extract_features(g, days, ShockSchedule(), u, t);
    auto later = days;
    for (auto& d : later) {
      if (d >= t) d = rng.bernoulli(0.5) ? kNever : t + static_cast<int>(rng.below(5));
    }
    CHECK(extract_features(g, later, ShockSchedule(), u, t) == before);
    if (before.degree > 0) CHECK(before.peer_saturation * before.degree == doctest::Approx(before.active_influences));
  }
}

TEST_CASE("extraction reproduces the features logged by the cascade") {
  SynthConfig cfg;
  cfg.n_nodes = 1500;
  cfg.mean_degree = 12;
  cfg.seed = 3;
  const auto world = gen_graph(cfg);
  auto params = reference_params(1500, 3);
  params.shocks = ShockSchedule({{4, 1.0, 0.6}, {15, 0.5, 0.3}});
  CascadeConfig cc;
  cc.random_seeds = 10;
  const auto run = run_realization(world.graph, params, 21, cc);
  REQUIRE(run.events.size() > 50);
  for (const auto& e : run.events) {
    const auto x = extract_features(world.graph, run.adoption_days, params.shocks, e.node, e.day);
    CHECK(x == e.features);
  }
}

TEST_CASE("feature CSV round trip") {
  clab::test::TempDir dir;
  std::vector<FeatureRow> rows;
  rows.push_back({"a", 3, make_features(2, 12, 1, 2, ShockSchedule({{1, 1.0, 0.5}}), 3), 0});
  rows.push_back({"b,c", 7, make_features(0, 4, 0, 0, ShockSchedule(), 7), std::nullopt});
  write_feature_csv(rows, dir / "f.csv");
  const auto back = read_feature_csv(dir / "f.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].node == "a");
  CHECK(back[0].day == 3);
  CHECK(back[0].x == rows[0].x);
  CHECK(back[0].label == 0);
  CHECK(back[1].node == "b,c");
  CHECK(back[1].x == rows[1].x);
  CHECK_FALSE(back[1].label.has_value());
}

TEST_CASE("feature array round trip keeps column order") {
  const auto x = make_features(3, 9, 2, 5, ShockSchedule({{1, 1.0, 0.5}}), 6);
  const auto a = x.to_array();
  CHECK(a[kActiveInfluences] == 3);
  CHECK(a[kDegree] == 9);
  CHECK(a[kExposureDuration] == 4);
  CHECK(a[kInfluenceRecency] == 1);
  CHECK(a[kShockRecency] == 5);
  CHECK(FeatureVector::from_array(a) == x);
  CHECK(kFeatureNames[kSaturation] == "saturation");
}
