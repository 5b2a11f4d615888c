#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "clab/graph.hpp"
#include "clab/shocks.hpp"

namespace clab {

// Sentinel adoption day for nodes that never adopt.
inline constexpr int kNever = std::numeric_limits<int>::max();

struct Adoption {
  NodeId node = 0;
  int day = 0;

  friend bool operator==(const Adoption&, const Adoption&) = default;
};

// Observed adoptions over the study horizon [first_day, last_day], plus the
// day ranges considered shock periods (possibly empty).
struct AdoptionLog {
  std::vector<Adoption> records;
  int first_day = 0;
  int last_day = 0;
  std::vector<ShockRange> shock_periods;

  // Throws DataError if a node appears twice, is out of range, or adopts
  // outside the horizon.
  void validate(std::size_t node_count) const;

  // Per-node adoption day, kNever for non-adopters.
  std::vector<int> adoption_days(std::size_t node_count) const;

  bool in_shock_period(int day) const;

  // Daily counts over the horizon; index 0 is first_day.
  AdoptionSeries daily_counts() const;

  // Records sorted by (day, node).
  std::vector<Adoption> sorted_records() const;
};

// Reads a `node,day` CSV with node external ids resolved against `g`.
// The horizon defaults to [0, max day] unless given.
AdoptionLog load_adoption_log(const std::filesystem::path& path, const DirectedGraph& g,
                              int first_day = 0, int last_day = -1);

void write_adoption_log(const AdoptionLog& log, const DirectedGraph& g,
                        const std::filesystem::path& path);

}  // namespace clab
