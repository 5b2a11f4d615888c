#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "clab/calibrate.hpp"
#include "clab/features.hpp"
#include "clab/graph.hpp"

namespace clab {

enum class Mechanism : std::uint8_t { Simple = 0, Complex = 1, Spontaneous = 2, Shock = 3 };
inline constexpr std::size_t kMechanismCount = 4;
inline constexpr std::array<Mechanism, kMechanismCount> kMechanisms = {
    Mechanism::Simple, Mechanism::Complex, Mechanism::Spontaneous, Mechanism::Shock};

std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view text);

constexpr std::uint8_t mechanism_bit(Mechanism m) {
  return static_cast<std::uint8_t>(1u << static_cast<unsigned>(m));
}
inline constexpr std::uint8_t kAllMechanisms = 0x0F;

// 1 - (1 - beta)^m.
double simple_adoption_probability(double beta, std::size_t m);
// k > 0 and m / k >= phi.
bool complex_fires(std::size_t m, std::size_t k, double phi);
// min(1, shock_prob_at_peak * lambda(day) / lambda_peak_max); 0 without shocks.
double shock_adoption_probability(const MechanismParams& params, int day);

struct CascadeConfig {
  double stop_fraction = 0.18;
  int horizon_days = 730;
  std::vector<NodeId> seeds;      // explicit day-0 adopters
  std::size_t random_seeds = 0;   // extra day-0 adopters drawn per realization
  std::uint8_t enabled = kAllMechanisms;
};

struct CascadeEvent {
  NodeId node = 0;
  int day = 0;
  Mechanism mechanism = Mechanism::Simple;
  std::uint8_t fired = 0;  // bitmask of every rule that fired
  FeatureVector features;
  std::uint32_t realization = 0;

  friend bool operator==(const CascadeEvent&, const CascadeEvent&) = default;
};

// Mutable state of one realization. Adoption is absorbing; exposure counts
// only include adoptions from previous days.
class CascadeState {
 public:
  CascadeState(const DirectedGraph& g, std::uint64_t seed, std::uint32_t realization = 0);

  // Marks `node` adopted on the current day with the given label. Its
  // followers see it from the next day on.
  void adopt(NodeId node, Mechanism label);

  int day() const { return day_; }
  std::uint64_t seed() const { return seed_; }
  std::uint32_t realization() const { return realization_; }
  std::size_t adopted_count() const { return adopted_count_; }
  bool adopted(NodeId i) const { return adoption_day_[i] != kNever; }
  const std::vector<int>& adoption_days() const { return adoption_day_; }
  // -1 for nodes that have not adopted.
  int label(NodeId i) const { return label_[i]; }
  std::size_t exposure(NodeId i) const { return exposure_[i]; }

 private:
  friend std::vector<CascadeEvent> step_day(const DirectedGraph&, const MechanismParams&,
                                            CascadeState&, std::uint8_t);

  void propagate_pending();

  const DirectedGraph* graph_;
  std::uint64_t seed_;
  std::uint32_t realization_;
  int day_ = 0;
  std::size_t adopted_count_ = 0;
  std::vector<int> adoption_day_;
  std::vector<std::int8_t> label_;
  std::vector<std::uint32_t> exposure_;
  std::vector<int> first_exposure_;
  std::vector<int> last_exposure_;
  std::vector<NodeId> pending_;
};

// Advances one day: every susceptible node checks in with probability a_i;
// an active node evaluates each enabled rule against its frozen exposure and
// adopts if any fires, taking a label drawn uniformly from the fired rules.
// Returns the day's events in ascending node order.
std::vector<CascadeEvent> step_day(const DirectedGraph& g, const MechanismParams& params,
                                   CascadeState& state, std::uint8_t enabled = kAllMechanisms);

struct Realization {
  std::vector<CascadeEvent> events;  // rule-driven adoptions, ordered by (day, node)
  std::vector<NodeId> seeds;
  std::vector<int> adoption_days;
  std::vector<std::size_t> adopted_after_day;  // cumulative adopters at the end of each day
  int days_simulated = 0;
  bool reached_stop_fraction = false;
};

// Runs days 0, 1, ... until the adopted fraction reaches stop_fraction or
// horizon_days have elapsed. Deterministic in (graph, params, seed, config).
Realization run_realization(const DirectedGraph& g, const MechanismParams& params,
                            std::uint64_t seed, const CascadeConfig& config = {},
                            std::uint32_t realization = 0);

struct EnsembleResult {
  std::vector<CascadeEvent> events;  // deduplicated on (features, mechanism)
  std::array<std::size_t, kMechanismCount> counts_before{};
  std::array<std::size_t, kMechanismCount> counts_after{};
  std::vector<int> days_simulated;
  std::vector<std::size_t> adopters;
};

// Realization r uses seed derive_seed(seed0, r). Realizations run in parallel
// and are concatenated in realization order before deduplication, which keeps
// the first occurrence.
EnsembleResult run_ensemble(const DirectedGraph& g, const MechanismParams& params,
                            std::size_t realizations, std::uint64_t seed0,
                            const CascadeConfig& config = {}, std::size_t threads = 1);

nlohmann::json event_to_json(const CascadeEvent& e, const DirectedGraph& g);
void write_events_jsonl(std::span<const CascadeEvent> events, const DirectedGraph& g,
                        const std::filesystem::path& path);

struct LabeledEvent {
  FeatureVector features;
  Mechanism mechanism;
};
std::vector<LabeledEvent> read_events_jsonl(const std::filesystem::path& path);

nlohmann::json ensemble_summary_json(const EnsembleResult& result);

}  // namespace clab
