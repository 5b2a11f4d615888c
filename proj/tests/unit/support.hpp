#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "clab/graph.hpp"
#include "clab/rng.hpp"

namespace clab::test {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("clab_unit_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Erdos-Renyi directed edges (self-loops excluded) as raw pairs.
inline std::vector<std::pair<NodeId, NodeId>> random_edges(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId s = 0; s < n; ++s) {
    for (NodeId t = 0; t < n; ++t) {
      if (s != t && rng.bernoulli(p)) edges.emplace_back(s, t);
    }
  }
  return edges;
}

inline DirectedGraph random_graph(std::size_t n, double p, std::uint64_t seed) {
  return DirectedGraph::from_edges(n, random_edges(n, p, seed));
}

// Leaves 1..n-1 follow hub 0.
inline DirectedGraph star_graph(std::size_t n) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId leaf = 1; leaf < n; ++leaf) edges.emplace_back(leaf, 0);
  return DirectedGraph::from_edges(n, std::move(edges));
}

}  // namespace clab::test
