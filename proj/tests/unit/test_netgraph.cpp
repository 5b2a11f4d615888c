#include <algorithm>
#include <set>
#include <string>

#include "doctest.h"

#include "clab/error.hpp"
#include "clab/graph.hpp"
#include "support.hpp"

using namespace clab;
using clab::test::TempDir;
using clab::test::write_text;

TEST_CASE("reciprocal pair loads as two nodes and two edges") {
  TempDir dir;
  write_text(dir / "g.csv", "source,target\nA,B\nB,A\n");
  const auto loaded = load_edge_list(dir / "g.csv");
  const auto& g = loaded.graph;
  CHECK(g.node_count() == 2);
  CHECK(g.edge_count() == 2);
  const NodeId a = *g.find("A");
  const NodeId b = *g.find("B");
  REQUIRE(g.followees(a).size() == 1);
  CHECK(g.followees(a)[0] == b);
  CHECK(g.mutual_degree(a) == 1);
  CHECK(g.mutual_degree(b) == 1);
}

TEST_CASE("duplicates and self-loops are dropped and counted") {
  TempDir dir;
  write_text(dir / "g.csv", "source,target\nA,B\nA,B\nA,A\n");
  const auto loaded = load_edge_list(dir / "g.csv");
  CHECK(loaded.graph.node_count() == 2);
  CHECK(loaded.graph.edge_count() == 1);
  CHECK(loaded.report.records == 3);
  CHECK(loaded.report.self_loops_dropped == 1);
  CHECK(loaded.report.duplicates_dropped == 1);
}

TEST_CASE("star graph degrees match a brute-force count of the written file") {
  TempDir dir;
  std::string text = "source,target\n";
  for (int leaf = 1; leaf < 10; ++leaf) text += "leaf" + std::to_string(leaf) + ",hub\n";
  write_text(dir / "star.csv", text);
  const auto g = load_edge_list(dir / "star.csv").graph;
  const NodeId hub = *g.find("hub");
  CHECK(g.in_degree(hub) == 0);
  CHECK(g.out_degree(hub) == 9);
  for (int leaf = 1; leaf < 10; ++leaf) {
    const NodeId id = *g.find("leaf" + std::to_string(leaf));
    CHECK(g.in_degree(id) == 1);
    CHECK(g.out_degree(id) == 0);
    CHECK(g.mutual_degree(id) == 0);
    CHECK(g.neighbors(id, Direction::Followee) == std::vector<NodeId>{hub});
  }
  CHECK(g.mutual_degree(hub) == 0);
  auto leaves = g.neighbors(hub, Direction::Follower);
  CHECK(leaves.size() == 9);
  CHECK(std::is_sorted(leaves.begin(), leaves.end()));
  CHECK(g.neighbors(hub, Direction::Followee).empty());
}

TEST_CASE("degrees match an edge-scan oracle on a random graph") {
  const auto raw = clab::test::random_edges(50, 0.1, 7);
  const auto g = DirectedGraph::from_edges(50, raw);
  std::set<std::pair<NodeId, NodeId>> edge_set(raw.begin(), raw.end());
  std::vector<std::size_t> in(50), out(50), mutual(50);
  for (const auto& [s, t] : edge_set) {
    ++in[s];
    ++out[t];
    if (edge_set.count({t, s})) ++mutual[s];
  }
  const auto deg = degrees(g);
  std::size_t sum_in = 0, sum_out = 0;
  for (NodeId i = 0; i < 50; ++i) {
    CHECK(deg[i].in == in[i]);
    CHECK(deg[i].out == out[i]);
    CHECK(deg[i].mutual == mutual[i]);
    sum_in += deg[i].in;
    sum_out += deg[i].out;
  }
  CHECK(sum_in == g.edge_count());
  CHECK(sum_out == g.edge_count());
  CHECK(g.edge_count() == edge_set.size());
}

TEST_CASE("mutual neighbors equal followees intersected with followers") {
  const auto g = clab::test::random_graph(80, 0.08, 3);
  for (NodeId i = 0; i < g.node_count(); ++i) {
    const auto fe = g.neighbors(i, Direction::Followee);
    const auto fr = g.neighbors(i, Direction::Follower);
    std::vector<NodeId> both;
    std::set_intersection(fe.begin(), fe.end(), fr.begin(), fr.end(), std::back_inserter(both));
    CHECK(g.neighbors(i, Direction::Mutual) == both);
    CHECK(std::find(fe.begin(), fe.end(), i) == fe.end());
    for (NodeId j : fe) CHECK(g.follows(i, j));
    for (NodeId j : fr) CHECK(g.follows(j, i));
  }
}

TEST_CASE("neighbors rejects an out-of-range id") {
  const auto g = clab::test::star_graph(4);
  CHECK_THROWS_AS(g.neighbors(4, Direction::Followee), std::out_of_range);
}

TEST_CASE("write then load reproduces the edge set and ids") {
  TempDir dir;
  const auto g = clab::test::random_graph(60, 0.05, 11);
  write_edge_list(g, dir / "g.csv");
  write_node_map(g, dir / "g.nodes.csv");
  const auto back = load_edge_list(dir / "g.csv", dir / "g.nodes.csv").graph;
  CHECK(back.node_count() == g.node_count());
  CHECK(back.edges() == g.edges());
  for (NodeId i = 0; i < g.node_count(); ++i) CHECK(back.external_id(i) == g.external_id(i));
}

TEST_CASE("malformed records raise a data error naming the line") {
  TempDir dir;
  write_text(dir / "bad.csv", "source,target\nA,B\nC\n");
  try {
    load_edge_list(dir / "bad.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  write_text(dir / "empty.csv", "source,target\n");
  CHECK_THROWS_AS(load_edge_list(dir / "empty.csv"), DataError);
  write_text(dir / "header.csv", "from,to\nA,B\n");
  CHECK_THROWS_AS(load_edge_list(dir / "header.csv"), DataError);
  CHECK_THROWS_AS(load_edge_list(dir / "missing.csv"), DataError);
}

TEST_CASE("node map keeps isolated nodes") {
  TempDir dir;
  write_text(dir / "g.csv", "source,target\nA,B\n");
  write_text(dir / "g.nodes.csv", "id,external_id\n0,A\n1,B\n2,C\n");
  const auto g = load_edge_list(dir / "g.csv", dir / "g.nodes.csv").graph;
  CHECK(g.node_count() == 3);
  CHECK(g.in_degree(2) == 0);
  CHECK(g.out_degree(2) == 0);
}

TEST_CASE("direction names round-trip") {
  for (auto d : {Direction::Followee, Direction::Follower, Direction::Mutual}) {
    CHECK(parse_direction(to_string(d)) == d);
  }
  CHECK_THROWS_AS(parse_direction("sideways"), UsageError);
}
