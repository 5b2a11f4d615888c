#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace clab {

using NodeId = std::uint32_t;

// Tie direction relative to an ego. Followees are the ego's information
// sources (nodes the ego follows); followers are its audience.
enum class Direction { Followee, Follower, Mutual };

std::string_view to_string(Direction d);
Direction parse_direction(std::string_view text);

struct LoadReport {
  std::size_t records = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t self_loops_dropped = 0;
};

// Immutable directed follower graph in compressed sparse row form, with both
// adjacency directions stored sorted ascending. An edge (s, t) means s
// follows t, so t is in followees(s) and s is in followers(t).
class DirectedGraph {
 public:
  DirectedGraph() = default;

  // Builds from raw (source, target) pairs. Self-loops and duplicates are
  // dropped and counted in `report` when given. If `external_ids` is empty,
  // ids "0".."n-1" are used.
  static DirectedGraph from_edges(std::size_t node_count,
                                  std::vector<std::pair<NodeId, NodeId>> edges,
                                  std::vector<std::string> external_ids = {},
                                  LoadReport* report = nullptr);

  std::size_t node_count() const { return external_ids_.size(); }
  std::size_t edge_count() const { return followee_targets_.size(); }

  std::span<const NodeId> followees(NodeId i) const {
    return {followee_targets_.data() + followee_offsets_[i],
            followee_targets_.data() + followee_offsets_[i + 1]};
  }
  std::span<const NodeId> followers(NodeId i) const {
    return {follower_sources_.data() + follower_offsets_[i],
            follower_sources_.data() + follower_offsets_[i + 1]};
  }

  // k_i: number of followees.
  std::size_t in_degree(NodeId i) const {
    return followee_offsets_[i + 1] - followee_offsets_[i];
  }
  std::size_t out_degree(NodeId i) const {
    return follower_offsets_[i + 1] - follower_offsets_[i];
  }
  std::size_t mutual_degree(NodeId i) const;

  // Sorted ascending. Throws std::out_of_range for an invalid id.
  std::vector<NodeId> neighbors(NodeId i, Direction direction) const;

  bool follows(NodeId source, NodeId target) const;

  const std::string& external_id(NodeId i) const { return external_ids_[i]; }
  std::optional<NodeId> find(std::string_view external_id) const;

  // All edges as (source, target), ordered by source then target.
  std::vector<std::pair<NodeId, NodeId>> edges() const;

 private:
  std::vector<std::size_t> followee_offsets_{0};
  std::vector<NodeId> followee_targets_;
  std::vector<std::size_t> follower_offsets_{0};
  std::vector<NodeId> follower_sources_;
  std::vector<std::string> external_ids_;
  std::unordered_map<std::string, NodeId> index_;
};

struct DegreeTriple {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t mutual = 0;
};

std::vector<DegreeTriple> degrees(const DirectedGraph& g);

struct LoadedGraph {
  DirectedGraph graph;
  LoadReport report;
};

// Reads a `source,target` edge-list CSV. When `node_map` is given (an
// `id,external_id` CSV as written by write_node_map), dense ids follow it and
// isolated nodes are preserved; otherwise ids are assigned in order of first
// appearance. Throws DataError with a line number on malformed records and
// on an edge list with no records.
LoadedGraph load_edge_list(const std::filesystem::path& path,
                           const std::optional<std::filesystem::path>& node_map = std::nullopt);

void write_edge_list(const DirectedGraph& g, const std::filesystem::path& path);
void write_node_map(const DirectedGraph& g, const std::filesystem::path& path);

}  // namespace clab
