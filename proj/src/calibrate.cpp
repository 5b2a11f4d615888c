#include "clab/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "clab/error.hpp"
#include "clab/rng.hpp"

namespace clab {

PoolSummary summarize(std::span<const double> values) {
  PoolSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  s.min = *lo;
  s.max = *hi;
  return s;
}

std::size_t eve_exposure(const DirectedGraph& g, std::span<const int> adoption_days, NodeId node) {
  const int day = adoption_days[node];
  std::size_t m = 0;
  for (NodeId v : g.followees(node)) {
    if (adoption_days[v] < day) ++m;
  }
  return m;
}

namespace {

// Non-shock adopters with positive exposure, ascending node id.
std::vector<std::pair<NodeId, std::size_t>> exposed_organic_adopters(const DirectedGraph& g,
                                                                     const AdoptionLog& log) {
  log.validate(g.node_count());
  const auto days = log.adoption_days(g.node_count());
  std::vector<std::pair<NodeId, std::size_t>> out;
  for (NodeId i = 0; i < g.node_count(); ++i) {
    if (days[i] == kNever || log.in_shock_period(days[i])) continue;
    const std::size_t m = eve_exposure(g, days, i);
    if (m > 0) out.emplace_back(i, m);
  }
  return out;
}

}  // namespace

ParamPool calibrate_transmission(const DirectedGraph& g, const AdoptionLog& log) {
  ParamPool pool;
  for (const auto& [node, m] : exposed_organic_adopters(g, log)) {
    pool.values.push_back(1.0 / static_cast<double>(m));
  }
  if (pool.values.empty()) throw DataError("no adopter with positive exposure outside shock periods");
  pool.summary = summarize(pool.values);
  return pool;
}

ParamPool calibrate_thresholds(const DirectedGraph& g, const AdoptionLog& log) {
  ParamPool pool;
  for (const auto& [node, m] : exposed_organic_adopters(g, log)) {
    pool.values.push_back(static_cast<double>(m) / static_cast<double>(g.in_degree(node)));
  }
  if (pool.values.empty()) throw DataError("no adopter with followees and positive exposure");
  pool.summary = summarize(pool.values);
  return pool;
}

BackgroundRate calibrate_background(const DirectedGraph& g, const AdoptionLog& log) {
  log.validate(g.node_count());
  const auto days = log.adoption_days(g.node_count());
  const std::int64_t horizon = static_cast<std::int64_t>(log.last_day) - log.first_day + 1;
  BackgroundRate out;
  for (NodeId i = 0; i < g.node_count(); ++i) {
    if (days[i] == kNever) {
      out.susceptible_days += horizon;
      continue;
    }
    out.susceptible_days += days[i] - log.first_day;
    if (!log.in_shock_period(days[i]) && eve_exposure(g, days, i) == 0) ++out.zero_exposure_adopters;
  }
  if (out.susceptible_days <= 0) throw DataError("log has zero susceptible-days");
  out.r = static_cast<double>(out.zero_exposure_adopters) / static_cast<double>(out.susceptible_days);
  return out;
}

std::vector<double> calibrate_activity(std::span<const double> post_counts,
                                       const ActivityOptions& options) {
  if (post_counts.empty()) throw DataError("no posting counts");
  if (!(options.target_mean > 0.0) || options.target_mean > 1.0) {
    throw DataError("activity target mean must be in (0, 1]");
  }
  std::vector<double> a(post_counts.size());
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(post_counts[i] >= 0.0)) throw DataError("posting counts must be non-negative");
    a[i] = std::log1p(post_counts[i]);
    total += a[i];
  }
  if (!(total > 0.0)) throw DataError("all posting counts are zero");
  const double scale = options.target_mean * static_cast<double>(a.size()) / total;
  for (double& v : a) v = std::clamp(v * scale, options.floor, 1.0);
  return a;
}

void MechanismParams::validate(std::size_t node_count) const {
  if (beta.size() != node_count || phi.size() != node_count || activity.size() != node_count) {
    throw DataError("parameter vectors must have one entry per node");
  }
  for (double b : beta) {
    if (!(b >= 0.0 && b <= 1.0)) throw DataError("beta must be in [0, 1]");
  }
  for (double p : phi) {
    if (!(p > 0.0)) throw DataError("phi must be positive");
  }
  for (double a : activity) {
    if (!(a >= 0.0 && a <= 1.0)) throw DataError("activity must be in [0, 1]");
  }
  if (!(r >= 0.0 && r <= 1.0)) throw DataError("r must be in [0, 1]");
  if (!(shock_prob_at_peak >= 0.0)) throw DataError("shock_prob_at_peak must be >= 0");
}

nlohmann::json MechanismParams::to_json() const {
  return {{"version", 1},
          {"beta", beta},
          {"phi", phi},
          {"activity", activity},
          {"r", r},
          {"shocks", shocks.to_json()},
          {"shock_prob_at_peak", shock_prob_at_peak}};
}

std::vector<double> resample_pool(std::span<const double> pool, std::size_t node_count,
                                  std::uint64_t seed) {
  if (pool.empty()) throw DataError("cannot resample from an empty pool");
  Rng rng(seed);
  std::vector<double> out(node_count);
  for (auto& v : out) v = pool[rng.below(pool.size())];
  return out;
}

namespace {

std::vector<double> per_node(const nlohmann::json& j, const std::string& name, std::size_t n,
                             std::uint64_t seed, std::uint64_t stream) {
  if (j.contains(name)) {
    const auto& v = j.at(name);
    if (v.is_number()) return std::vector<double>(n, v.get<double>());
    auto values = v.get<std::vector<double>>();
    if (values.size() != n) {
      throw DataError("params '" + name + "' has " + std::to_string(values.size()) +
                      " entries, graph has " + std::to_string(n) + " nodes");
    }
    return values;
  }
  const std::string pool_name = name + "_pool";
  if (j.contains(pool_name)) {
    return resample_pool(j.at(pool_name).get<std::vector<double>>(), n, derive_seed(seed, stream));
  }
  throw DataError("params missing '" + name + "'");
}

}  // namespace

MechanismParams MechanismParams::from_json(const nlohmann::json& j, std::size_t node_count,
                                           std::uint64_t seed) {
  MechanismParams p;
  try {
    p.beta = per_node(j, "beta", node_count, seed, 1);
    p.phi = per_node(j, "phi", node_count, seed, 2);
    p.activity = per_node(j, "activity", node_count, seed, 3);
    p.r = j.value("r", 0.0);
    if (j.contains("shocks")) p.shocks = ShockSchedule::from_json(j.at("shocks"));
    p.shock_prob_at_peak = j.value("shock_prob_at_peak", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad params JSON: ") + e.what());
  }
  p.validate(node_count);
  return p;
}

}  // namespace clab
