#include "clab/cascade.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "clab/error.hpp"
#include "clab/parallel.hpp"
#include "clab/rng.hpp"

namespace clab {

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::Simple: return "Simple";
    case Mechanism::Complex: return "Complex";
    case Mechanism::Spontaneous: return "Spontaneous";
    case Mechanism::Shock: return "Shock";
  }
  return "?";
}

Mechanism parse_mechanism(std::string_view text) {
  for (Mechanism m : kMechanisms) {
    if (text == to_string(m)) return m;
  }
  throw DataError("unknown mechanism '" + std::string(text) + "'");
}

double simple_adoption_probability(double beta, std::size_t m) {
  return 1.0 - std::pow(1.0 - beta, static_cast<double>(m));
}

bool complex_fires(std::size_t m, std::size_t k, double phi) {
  return k > 0 && static_cast<double>(m) / static_cast<double>(k) >= phi;
}

double shock_adoption_probability(const MechanismParams& params, int day) {
  const double peak = params.shocks.peak_max();
  if (peak <= 0.0 || params.shock_prob_at_peak <= 0.0) return 0.0;
  return std::min(1.0, params.shock_prob_at_peak * params.shocks.intensity(day) / peak);
}

CascadeState::CascadeState(const DirectedGraph& g, std::uint64_t seed, std::uint32_t realization)
    : graph_(&g),
      seed_(seed),
      realization_(realization),
      adoption_day_(g.node_count(), kNever),
      label_(g.node_count(), -1),
      exposure_(g.node_count(), 0),
      first_exposure_(g.node_count(), kNever),
      last_exposure_(g.node_count(), std::numeric_limits<int>::min()) {}

void CascadeState::adopt(NodeId node, Mechanism label) {
  if (adoption_day_[node] != kNever) return;
  adoption_day_[node] = day_;
  label_[node] = static_cast<std::int8_t>(label);
  ++adopted_count_;
  pending_.push_back(node);
}

void CascadeState::propagate_pending() {
  for (NodeId v : pending_) {
    const int t = adoption_day_[v];
    for (NodeId w : graph_->followers(v)) {
      ++exposure_[w];
      first_exposure_[w] = std::min(first_exposure_[w], t);
      last_exposure_[w] = std::max(last_exposure_[w], t);
    }
  }
  pending_.clear();
}

namespace {

// Per-node draw slots within a day.
enum Slot : std::uint64_t { kActivity = 0, kSimple = 1, kSpontaneous = 2, kShock = 3, kLabel = 4 };

}  // namespace

std::vector<CascadeEvent> step_day(const DirectedGraph& g, const MechanismParams& params,
                                   CascadeState& state, std::uint8_t enabled) {
  const int day = state.day_;
  const auto day_key = static_cast<std::uint64_t>(day);
  const std::uint64_t seed = state.seed_;
  const double p_shock =
      (enabled & mechanism_bit(Mechanism::Shock)) ? shock_adoption_probability(params, day) : 0.0;
  const double r = (enabled & mechanism_bit(Mechanism::Spontaneous)) ? params.r : 0.0;
  const bool simple_on = enabled & mechanism_bit(Mechanism::Simple);
  const bool complex_on = enabled & mechanism_bit(Mechanism::Complex);

  std::vector<CascadeEvent> events;
  const auto n = static_cast<NodeId>(g.node_count());
  for (NodeId i = 0; i < n; ++i) {
    if (state.adoption_day_[i] != kNever) continue;
    if (!(hash_unit(seed, day_key, i, kActivity) < params.activity[i])) continue;

    const std::size_t m = state.exposure_[i];
    const std::size_t k = g.in_degree(i);
    std::uint8_t fired = 0;
    if (simple_on && m > 0 &&
        hash_unit(seed, day_key, i, kSimple) < simple_adoption_probability(params.beta[i], m)) {
      fired |= mechanism_bit(Mechanism::Simple);
    }
    if (complex_on && complex_fires(m, k, params.phi[i])) fired |= mechanism_bit(Mechanism::Complex);
    if (r > 0.0 && hash_unit(seed, day_key, i, kSpontaneous) < r) {
      fired |= mechanism_bit(Mechanism::Spontaneous);
    }
    if (p_shock > 0.0 && hash_unit(seed, day_key, i, kShock) < p_shock) {
      fired |= mechanism_bit(Mechanism::Shock);
    }
    if (!fired) continue;

    const int count = std::popcount(static_cast<unsigned>(fired));
    auto pick = static_cast<int>(hash_unit(seed, day_key, i, kLabel) * count);
    Mechanism label = Mechanism::Simple;
    for (Mechanism candidate : kMechanisms) {
      if (fired & mechanism_bit(candidate)) {
        if (pick-- == 0) {
          label = candidate;
          break;
        }
      }
    }
    CascadeEvent e;
    e.node = i;
    e.day = day;
    e.mechanism = label;
    e.fired = fired;
    e.features = make_features(m, k, state.first_exposure_[i], state.last_exposure_[i],
                               params.shocks, day);
    e.realization = state.realization_;
    events.push_back(e);
  }
  for (const auto& e : events) state.adopt(e.node, e.mechanism);
  state.propagate_pending();
  ++state.day_;
  return events;
}

Realization run_realization(const DirectedGraph& g, const MechanismParams& params,
                            std::uint64_t seed, const CascadeConfig& config,
                            std::uint32_t realization) {
  params.validate(g.node_count());
  if (config.horizon_days < 1) throw UsageError("horizon must be at least one day");
  Realization out;
  CascadeState state(g, seed, realization);
  const std::size_t n = g.node_count();

  for (NodeId s : config.seeds) {
    if (s >= n) throw DataError("seed node out of range");
    if (!state.adopted(s)) {
      state.adopt(s, Mechanism::Spontaneous);
      out.seeds.push_back(s);
    }
  }
  if (config.random_seeds > 0) {
    Rng rng(derive_seed(seed, 0x5EED));
    const std::size_t target = std::min(n, out.seeds.size() + config.random_seeds);
    while (out.seeds.size() < target) {
      const auto s = static_cast<NodeId>(rng.below(n));
      if (!state.adopted(s)) {
        state.adopt(s, Mechanism::Spontaneous);
        out.seeds.push_back(s);
      }
    }
  }

  while (state.day() < config.horizon_days) {
    auto events = step_day(g, params, state, config.enabled);
    out.events.insert(out.events.end(), events.begin(), events.end());
    out.adopted_after_day.push_back(state.adopted_count());
    if (static_cast<double>(state.adopted_count()) / static_cast<double>(n) >= config.stop_fraction) {
      out.reached_stop_fraction = true;
      break;
    }
  }
  out.days_simulated = state.day();
  out.adoption_days = state.adoption_days();
  return out;
}

namespace {

struct DedupKey {
  std::array<std::uint64_t, kFeatureCount> bits;
  std::uint8_t label;
  friend bool operator==(const DedupKey&, const DedupKey&) = default;
};

struct DedupHash {
  std::size_t operator()(const DedupKey& k) const {
    std::uint64_t h = k.label;
    for (auto b : k.bits) h = splitmix64(h ^ b);
    return static_cast<std::size_t>(h);
  }
};

DedupKey key_of(const CascadeEvent& e) {
  DedupKey key{};
  const auto x = e.features.to_array();
  for (std::size_t c = 0; c < kFeatureCount; ++c) {
    // +0.0 so that -0.0 and 0.0 collapse.
    key.bits[c] = std::bit_cast<std::uint64_t>(x[c] + 0.0);
  }
  key.label = static_cast<std::uint8_t>(e.mechanism);
  return key;
}

}  // namespace

EnsembleResult run_ensemble(const DirectedGraph& g, const MechanismParams& params,
                            std::size_t realizations, std::uint64_t seed0,
                            const CascadeConfig& config, std::size_t threads) {
  if (realizations < 1) throw UsageError("ensemble needs at least one realization");
  std::vector<Realization> runs(realizations);
  parallel_for(realizations, threads, [&](std::size_t r) {
    runs[r] = run_realization(g, params, derive_seed(seed0, r), config, static_cast<std::uint32_t>(r));
  });

  EnsembleResult out;
  std::unordered_set<DedupKey, DedupHash> seen;
  for (auto& run : runs) {
    out.days_simulated.push_back(run.days_simulated);
    out.adopters.push_back(run.adopted_after_day.empty() ? run.seeds.size() : run.adopted_after_day.back());
    for (const auto& e : run.events) {
      ++out.counts_before[static_cast<std::size_t>(e.mechanism)];
      if (seen.insert(key_of(e)).second) {
        ++out.counts_after[static_cast<std::size_t>(e.mechanism)];
        out.events.push_back(e);
      }
    }
    run = Realization{};
  }
  return out;
}

nlohmann::json event_to_json(const CascadeEvent& e, const DirectedGraph& g) {
  nlohmann::json fired = nlohmann::json::array();
  for (Mechanism m : kMechanisms) {
    if (e.fired & mechanism_bit(m)) fired.push_back(to_string(m));
  }
  nlohmann::json features = nlohmann::json::object();
  const auto x = e.features.to_array();
  for (std::size_t c = 0; c < kFeatureCount; ++c) features[std::string(kFeatureNames[c])] = x[c];
  return {{"realization", e.realization},
          {"node", g.external_id(e.node)},
          {"day", e.day},
          {"mechanism", to_string(e.mechanism)},
          {"fired", fired},
          {"features", features}};
}

void write_events_jsonl(std::span<const CascadeEvent> events, const DirectedGraph& g,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : events) out << event_to_json(e, g).dump() << '\n';
}

std::vector<LabeledEvent> read_events_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<LabeledEvent> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      std::array<double, kFeatureCount> x{};
      const auto& f = j.at("features");
      for (std::size_t c = 0; c < kFeatureCount; ++c) x[c] = f.at(std::string(kFeatureNames[c])).get<double>();
      out.push_back({FeatureVector::from_array(x), parse_mechanism(j.at("mechanism").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(line_number) + ": " + e.what());
    }
  }
  return out;
}

nlohmann::json ensemble_summary_json(const EnsembleResult& result) {
  nlohmann::json before = nlohmann::json::object(), after = nlohmann::json::object();
  for (Mechanism m : kMechanisms) {
    before[std::string(to_string(m))] = result.counts_before[static_cast<std::size_t>(m)];
    after[std::string(to_string(m))] = result.counts_after[static_cast<std::size_t>(m)];
  }
  return {{"realizations", result.days_simulated.size()},
          {"events_before_dedup", before},
          {"events_after_dedup", after},
          {"days_simulated", result.days_simulated},
          {"adopters", result.adopters}};
}

}  // namespace clab
