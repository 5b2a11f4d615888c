#include "clab/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clab/error.hpp"
#include "clab/rng.hpp"

namespace clab {

void SynthConfig::validate() const {
  if (n_nodes < 2) throw UsageError("synthetic graph needs at least 2 nodes");
  if (!(exponent > 1.0)) throw UsageError("degree exponent must exceed 1");
  if (!(homophily >= 0.0 && homophily <= 1.0)) throw UsageError("homophily must be in [0, 1]");
  if (!(trait_prob >= 0.0 && trait_prob <= 1.0)) throw UsageError("trait probability must be in [0, 1]");
  if (!(mean_degree > 0.0) || mean_degree > static_cast<double>(n_nodes - 1)) {
    throw UsageError("mean degree must be in (0, n - 1]");
  }
}

namespace {

double pareto(Rng& rng, double exponent) {
  return std::pow(1.0 - rng.uniform(), -1.0 / (exponent - 1.0));
}

std::vector<std::size_t> scaled_degrees(std::span<const double> weight, double mean, std::size_t cap) {
  const auto total_for = [&](double c) {
    double total = 0.0;
    for (double w : weight) total += std::min(static_cast<double>(cap), std::floor(c * w + 0.5));
    return total;
  };
  const double target = mean * static_cast<double>(weight.size());
  double lo = 0.0, hi = 1.0;
  while (total_for(hi) < target) {
    hi *= 2.0;
    if (hi > 1e12) throw UsageError("degree target is infeasible");
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (total_for(mid) < target ? lo : hi) = mid;
  }
  std::vector<std::size_t> k(weight.size());
  for (std::size_t i = 0; i < weight.size(); ++i) {
    k[i] = static_cast<std::size_t>(std::min(static_cast<double>(cap), std::floor(hi * weight[i] + 0.5)));
  }
  return k;
}

// Weighted sampling by inverse CDF over a cumulative array.
struct Sampler {
  std::vector<NodeId> nodes;
  std::vector<double> cumulative;

  NodeId draw(Rng& rng) const {
    const double u = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return nodes[static_cast<std::size_t>(it - cumulative.begin())];
  }
};

Sampler make_sampler(std::span<const double> weight, const std::vector<NodeId>& nodes) {
  Sampler s;
  s.nodes = nodes;
  double total = 0.0;
  for (NodeId v : nodes) {
    total += weight[v];
    s.cumulative.push_back(total);
  }
  return s;
}

}  // namespace

SynthWorld gen_graph(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.n_nodes;
  Rng rng(derive_seed(config.seed, 0x6A1));
  SynthWorld world;
  world.trait.resize(n);
  std::vector<double> in_weight(n), popularity(n);
  for (std::size_t i = 0; i < n; ++i) {
    world.trait[i] = rng.bernoulli(config.trait_prob) ? 1 : 0;
    in_weight[i] = pareto(rng, config.exponent);
    popularity[i] = pareto(rng, config.exponent);
  }
  const auto k = scaled_degrees(in_weight, config.mean_degree, n - 1);

  std::vector<NodeId> all(n);
  std::iota(all.begin(), all.end(), NodeId{0});
  std::array<std::vector<NodeId>, 2> groups;
  for (NodeId i = 0; i < n; ++i) groups[static_cast<std::size_t>(world.trait[i])].push_back(i);
  const Sampler any = make_sampler(popularity, all);
  const std::array<Sampler, 2> by_group = {make_sampler(popularity, groups[0]),
                                           make_sampler(popularity, groups[1])};

  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(static_cast<std::size_t>(config.mean_degree * static_cast<double>(n)));
  std::vector<NodeId> chosen;
  for (NodeId i = 0; i < n; ++i) {
    const auto& own = by_group[static_cast<std::size_t>(world.trait[i])];
    chosen.clear();
    std::size_t attempts = 0;
    const std::size_t max_attempts = 50 * k[i] + 100;
    while (chosen.size() < k[i] && attempts++ < max_attempts) {
      const bool restrict = config.homophily > 0.0 && rng.uniform() < config.homophily && own.nodes.size() > 1;
      const NodeId t = restrict ? own.draw(rng) : any.draw(rng);
      if (t == i || std::find(chosen.begin(), chosen.end(), t) != chosen.end()) continue;
      chosen.push_back(t);
    }
    for (NodeId t : chosen) edges.emplace_back(i, t);
  }
  world.graph = DirectedGraph::from_edges(n, std::move(edges));
  return world;
}

AdoptionLog gen_homophily_adoptions(const DirectedGraph& g, std::span<const int> trait,
                                    std::span<const double> rate_by_trait, int days, std::uint64_t seed) {
  if (trait.size() != g.node_count()) throw DataError("trait vector must cover every node");
  if (days < 1) throw UsageError("horizon must be at least one day");
  for (double r : rate_by_trait) {
    if (!(r >= 0.0 && r <= 1.0)) throw UsageError("adoption rates must be in [0, 1]");
  }
  AdoptionLog log;
  log.first_day = 0;
  log.last_day = days - 1;
  for (NodeId i = 0; i < g.node_count(); ++i) {
    const auto t = static_cast<std::size_t>(trait[i]);
    if (t >= rate_by_trait.size()) throw DataError("trait value has no adoption rate");
    const double rate = rate_by_trait[t];
    if (rate <= 0.0) continue;
    for (int day = 0; day < days; ++day) {
      if (hash_unit(seed, static_cast<std::uint64_t>(day), i, 0x40) < rate) {
        log.records.push_back({i, day});
        break;
      }
    }
  }
  log.records = log.sorted_records();
  return log;
}

AdoptionLog gen_pure_cascade(const DirectedGraph& g, Mechanism mechanism, const MechanismParams& params,
                             std::uint64_t seed, const CascadeConfig& config) {
  CascadeConfig cfg = config;
  cfg.enabled = mechanism_bit(mechanism);
  const auto run = run_realization(g, params, seed, cfg);
  AdoptionLog log;
  log.first_day = 0;
  log.last_day = std::max(0, run.days_simulated - 1);
  for (NodeId s : run.seeds) log.records.push_back({s, 0});
  for (const auto& e : run.events) log.records.push_back({e.node, e.day});
  log.records = log.sorted_records();
  return log;
}

ShockSchedule reference_shock_schedule() {
  return ShockSchedule({{181, 0.183, 0.626}, {261, 0.335, 0.231}, {401, 0.140, 0.775},
                        {608, 0.087, 0.556}, {675, 1.000, 0.679}});
}

namespace {

// Mean of 1/m under P(m) proportional to m^-s on 1..m_max.
double inverse_mean(double s, int m_max) {
  double num = 0.0, den = 0.0;
  for (int m = 1; m <= m_max; ++m) {
    const double w = std::pow(m, -s);
    num += w / m;
    den += w;
  }
  return num / den;
}

// Kumaraswamy(a, b) mean.
double kumaraswamy_mean(double a, double b) {
  return std::exp(std::log(b) + std::lgamma(1.0 + 1.0 / a) + std::lgamma(b) - std::lgamma(1.0 + 1.0 / a + b));
}

}  // namespace

MechanismParams reference_params(std::size_t node_count, std::uint64_t seed, double shock_prob_at_peak) {
  constexpr int kMaxExposure = 91;
  constexpr double kBetaMean = 0.089;
  constexpr double kPhiLow = 0.001, kPhiHigh = 0.246, kPhiMean = 0.146;
  constexpr double kPhiShape = 2.0;

  double lo = 0.0, hi = 8.0;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (inverse_mean(mid, kMaxExposure) < kBetaMean ? lo : hi) = mid;
  }
  std::vector<double> m_cdf;
  double total = 0.0;
  for (int m = 1; m <= kMaxExposure; ++m) {
    total += std::pow(m, -hi);
    m_cdf.push_back(total);
  }

  const double unit_mean = (kPhiMean - kPhiLow) / (kPhiHigh - kPhiLow);
  double blo = 1e-3, bhi = 100.0;  // Kumaraswamy mean decreases in b
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (blo + bhi);
    (kumaraswamy_mean(kPhiShape, mid) > unit_mean ? blo : bhi) = mid;
  }
  const double phi_b = 0.5 * (blo + bhi);

  MechanismParams p;
  p.beta.resize(node_count);
  p.phi.resize(node_count);
  Rng beta_rng(derive_seed(seed, 1)), phi_rng(derive_seed(seed, 2)), act_rng(derive_seed(seed, 3));
  for (std::size_t i = 0; i < node_count; ++i) {
    const double u = beta_rng.uniform() * total;
    const auto m = static_cast<int>(std::upper_bound(m_cdf.begin(), m_cdf.end(), u) - m_cdf.begin()) + 1;
    p.beta[i] = 1.0 / std::min(m, kMaxExposure);
    const double v = phi_rng.uniform();
    const double x = std::pow(1.0 - std::pow(1.0 - v, 1.0 / phi_b), 1.0 / kPhiShape);
    p.phi[i] = std::clamp(kPhiLow + (kPhiHigh - kPhiLow) * x, kPhiLow, kPhiHigh);
  }
  std::vector<double> posts(node_count);
  for (auto& c : posts) c = std::floor(pareto(act_rng, 2.0) * 5.0);
  p.activity = calibrate_activity(posts);
  p.r = 60e-6;
  p.shocks = reference_shock_schedule();
  p.shock_prob_at_peak = shock_prob_at_peak;
  return p;
}

}  // namespace clab
