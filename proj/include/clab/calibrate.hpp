#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "clab/adoption_log.hpp"
#include "clab/graph.hpp"
#include "clab/shocks.hpp"

namespace clab {

struct PoolSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

PoolSummary summarize(std::span<const double> values);

// Empirical parameter distribution, one value per qualifying adopter in
// ascending node order.
struct ParamPool {
  std::vector<double> values;
  PoolSummary summary;
};

// Exposure m at the adoption eve: followees that adopted strictly before the
// adopter's day.
std::size_t eve_exposure(const DirectedGraph& g, std::span<const int> adoption_days, NodeId node);

// beta = 1/m for every adopter outside shock periods with m > 0.
// Throws DataError if no such adopter exists.
ParamPool calibrate_transmission(const DirectedGraph& g, const AdoptionLog& log);

// phi = m/k over the same adopters (outside shock periods, m > 0, hence k > 0).
// Throws DataError if the pool is empty.
ParamPool calibrate_thresholds(const DirectedGraph& g, const AdoptionLog& log);

struct BackgroundRate {
  double r = 0.0;
  std::size_t zero_exposure_adopters = 0;
  std::int64_t susceptible_days = 0;
};

// r = (zero-exposure adopters outside shock periods) / (sum over all nodes of
// days spent susceptible in the horizon). Days before adoption count as
// susceptible; non-adopters contribute the full horizon.
BackgroundRate calibrate_background(const DirectedGraph& g, const AdoptionLog& log);

struct ActivityOptions {
  double target_mean = 0.032;
  double floor = 1e-6;  // lower clamp, keeps every node able to check in
};

// a_i = s * log(1 + c_i) with s chosen so mean(a) equals the target, then
// clamped to [floor, 1]. Throws DataError on negative or all-zero counts.
std::vector<double> calibrate_activity(std::span<const double> post_counts,
                                       const ActivityOptions& options = {});

// Per-node mechanism parameters consumed by the cascade engine.
struct MechanismParams {
  std::vector<double> beta;      // (0, 1]
  std::vector<double> phi;       // (0, 1], thresholds above 1 are allowed and never fire
  std::vector<double> activity;  // (0, 1]
  double r = 0.0;
  ShockSchedule shocks;
  double shock_prob_at_peak = 0.0;

  // Throws DataError when sizes or ranges are violated.
  void validate(std::size_t node_count) const;

  nlohmann::json to_json() const;

  // Accepts per-node arrays, scalars (broadcast), or `<name>_pool` arrays
  // resampled i.i.d. with a stream derived from `seed`.
  static MechanismParams from_json(const nlohmann::json& j, std::size_t node_count,
                                   std::uint64_t seed);
};

// Draws one value per node i.i.d. from `pool`.
std::vector<double> resample_pool(std::span<const double> pool, std::size_t node_count,
                                  std::uint64_t seed);

}  // namespace clab
