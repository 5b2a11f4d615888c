#include "clab/graph.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "clab/csv.hpp"
#include "clab/error.hpp"

namespace clab {

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Followee: return "followee";
    case Direction::Follower: return "follower";
    case Direction::Mutual: return "mutual";
  }
  return "?";
}

Direction parse_direction(std::string_view text) {
  if (text == "followee") return Direction::Followee;
  if (text == "follower") return Direction::Follower;
  if (text == "mutual") return Direction::Mutual;
  throw UsageError("unknown direction '" + std::string(text) + "'");
}

namespace {

void build_csr(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& sorted_edges,
               bool by_first, std::vector<std::size_t>& offsets, std::vector<NodeId>& targets) {
  offsets.assign(n + 1, 0);
  for (const auto& [s, t] : sorted_edges) ++offsets[(by_first ? s : t) + 1];
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  targets.resize(sorted_edges.size());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  for (const auto& [s, t] : sorted_edges) {
    const NodeId row = by_first ? s : t;
    targets[cursor[row]++] = by_first ? t : s;
  }
}

}  // namespace

DirectedGraph DirectedGraph::from_edges(std::size_t node_count,
                                        std::vector<std::pair<NodeId, NodeId>> edges,
                                        std::vector<std::string> external_ids,
                                        LoadReport* report) {
  DirectedGraph g;
  if (external_ids.empty()) {
    external_ids.reserve(node_count);
    for (std::size_t i = 0; i < node_count; ++i) external_ids.push_back(std::to_string(i));
  }
  if (external_ids.size() != node_count) {
    throw DataError("external id count does not match node count");
  }
  LoadReport local;
  local.records = edges.size();
  const auto loops = std::remove_if(edges.begin(), edges.end(), [&](const auto& e) {
    if (e.first >= node_count || e.second >= node_count) {
      throw DataError("edge endpoint out of range");
    }
    return e.first == e.second;
  });
  local.self_loops_dropped = static_cast<std::size_t>(edges.end() - loops);
  edges.erase(loops, edges.end());
  std::sort(edges.begin(), edges.end());
  const auto dups = std::unique(edges.begin(), edges.end());
  local.duplicates_dropped = static_cast<std::size_t>(edges.end() - dups);
  edges.erase(dups, edges.end());

  build_csr(node_count, edges, true, g.followee_offsets_, g.followee_targets_);
  // Re-sort by (target, source) so follower lists come out ascending.
  std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  build_csr(node_count, edges, false, g.follower_offsets_, g.follower_sources_);

  g.external_ids_ = std::move(external_ids);
  g.index_.reserve(node_count);
  for (std::size_t i = 0; i < node_count; ++i) {
    if (!g.index_.emplace(g.external_ids_[i], static_cast<NodeId>(i)).second) {
      throw DataError("duplicate external id '" + g.external_ids_[i] + "'");
    }
  }
  if (report) *report = local;
  return g;
}

std::size_t DirectedGraph::mutual_degree(NodeId i) const {
  const auto a = followees(i);
  const auto b = followers(i);
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

std::vector<NodeId> DirectedGraph::neighbors(NodeId i, Direction direction) const {
  if (i >= node_count()) throw std::out_of_range("node id " + std::to_string(i) + " out of range");
  switch (direction) {
    case Direction::Followee: {
      const auto s = followees(i);
      return {s.begin(), s.end()};
    }
    case Direction::Follower: {
      const auto s = followers(i);
      return {s.begin(), s.end()};
    }
    case Direction::Mutual: {
      std::vector<NodeId> out;
      const auto a = followees(i);
      const auto b = followers(i);
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
      return out;
    }
  }
  return {};
}

bool DirectedGraph::follows(NodeId source, NodeId target) const {
  const auto s = followees(source);
  return std::binary_search(s.begin(), s.end(), target);
}

std::optional<NodeId> DirectedGraph::find(std::string_view external_id) const {
  const auto it = index_.find(std::string(external_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::pair<NodeId, NodeId>> DirectedGraph::edges() const {
  std::vector<std::pair<NodeId, NodeId>> out;
  out.reserve(edge_count());
  for (NodeId i = 0; i < node_count(); ++i) {
    for (NodeId j : followees(i)) out.emplace_back(i, j);
  }
  return out;
}

std::vector<DegreeTriple> degrees(const DirectedGraph& g) {
  std::vector<DegreeTriple> out(g.node_count());
  for (NodeId i = 0; i < g.node_count(); ++i) {
    out[i] = {g.in_degree(i), g.out_degree(i), g.mutual_degree(i)};
  }
  return out;
}

LoadedGraph load_edge_list(const std::filesystem::path& path,
                           const std::optional<std::filesystem::path>& node_map) {
  std::vector<std::string> names;
  std::unordered_map<std::string, NodeId> ids;
  const bool fixed_ids = node_map.has_value();
  if (fixed_ids) {
    csv::read_rows(*node_map, {"id", "external_id"},
                   [&](const std::vector<std::string>& f, std::size_t line) {
                     if (f.size() < 2) {
                       throw DataError(node_map->string() + ": line " + std::to_string(line) +
                                       ": expected id,external_id");
                     }
                     const auto id = csv::parse_int(f[0], line);
                     if (id != static_cast<std::int64_t>(names.size())) {
                       throw DataError(node_map->string() + ": line " + std::to_string(line) +
                                       ": ids must be dense and ascending");
                     }
                     if (!ids.emplace(f[1], static_cast<NodeId>(id)).second) {
                       throw DataError(node_map->string() + ": line " + std::to_string(line) +
                                       ": duplicate external id");
                     }
                     names.push_back(f[1]);
                   });
  }
  auto intern = [&](const std::string& name, std::size_t line) -> NodeId {
    if (const auto it = ids.find(name); it != ids.end()) return it->second;
    if (fixed_ids) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": node '" + name +
                      "' missing from node map");
    }
    const auto id = static_cast<NodeId>(names.size());
    ids.emplace(name, id);
    names.push_back(name);
    return id;
  };

  std::vector<std::pair<NodeId, NodeId>> edges;
  csv::read_rows(path, {"source", "target"},
                 [&](const std::vector<std::string>& f, std::size_t line) {
                   if (f.size() != 2 || f[0].empty() || f[1].empty()) {
                     throw DataError(path.string() + ": line " + std::to_string(line) +
                                     ": malformed record, expected source,target");
                   }
                   const NodeId s = intern(f[0], line);
                   const NodeId t = intern(f[1], line);
                   edges.emplace_back(s, t);
                 });
  if (edges.empty()) throw DataError(path.string() + ": no edge records");

  LoadedGraph out;
  const std::size_t n = names.size();
  out.graph = DirectedGraph::from_edges(n, std::move(edges), std::move(names), &out.report);
  return out;
}

void write_edge_list(const DirectedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "source,target\n";
  for (NodeId i = 0; i < g.node_count(); ++i) {
    for (NodeId j : g.followees(i)) {
      out << csv::escape(g.external_id(i)) << ',' << csv::escape(g.external_id(j)) << '\n';
    }
  }
}

void write_node_map(const DirectedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "id,external_id\n";
  for (NodeId i = 0; i < g.node_count(); ++i) {
    out << i << ',' << csv::escape(g.external_id(i)) << '\n';
  }
}

}  // namespace clab
