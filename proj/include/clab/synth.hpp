#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clab/adoption_log.hpp"
#include "clab/calibrate.hpp"
#include "clab/cascade.hpp"
#include "clab/graph.hpp"

namespace clab {

struct SynthConfig {
  std::size_t n_nodes = 1000;
  double exponent = 2.5;      // Pareto tail of in-degree and of target popularity
  double mean_degree = 10.0;  // mean in-degree (followees per node)
  double homophily = 0.0;     // probability an edge is restricted to the ego's trait group
  double trait_prob = 0.5;    // P(trait = 1)
  std::uint64_t seed = 0;

  // Throws UsageError for n < 2, exponent <= 1, h outside [0, 1], or a mean
  // degree outside (0, n - 1].
  void validate() const;
};

struct SynthWorld {
  DirectedGraph graph;
  std::vector<int> trait;  // 0 or 1 per node
};

// Each node draws a Pareto in-degree (rescaled so the mean hits the target)
// and picks that many distinct followees with probability proportional to a
// Pareto popularity weight. Self-loops and duplicates are redrawn.
SynthWorld gen_graph(const SynthConfig& config);

// No peer influence: each node adopts on each day with its trait's rate.
AdoptionLog gen_homophily_adoptions(const DirectedGraph& g, std::span<const int> trait,
                                    std::span<const double> rate_by_trait, int days, std::uint64_t seed);

// Cascade with only `mechanism` enabled; seeds are included at day 0.
AdoptionLog gen_pure_cascade(const DirectedGraph& g, Mechanism mechanism, const MechanismParams& params,
                             std::uint64_t seed, const CascadeConfig& config = {});

// Five shocks at days 181, 261, 401, 608, 675 with the reference heights
// and decay exponents.
ShockSchedule reference_shock_schedule();

// Per-node draws matching the reference pool summaries: beta = 1/m with
// mean 0.089 over m in 1..91, phi in (0.001, 0.246) with mean 0.146,
// heavy-tailed activity with mean 0.032, r = 60e-6 and the reference shocks.
// The default shock scale makes the peak daily shock adoption (scale times
// mean activity) equal the largest observed daily fraction, 1759 / 276431.
inline constexpr double kReferenceShockProbAtPeak = 1759.0 / 276431.0 / 0.032;
MechanismParams reference_params(std::size_t node_count, std::uint64_t seed,
                                 double shock_prob_at_peak = kReferenceShockProbAtPeak);

}  // namespace clab
