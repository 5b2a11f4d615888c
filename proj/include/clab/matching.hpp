#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "clab/graph.hpp"
#include "clab/panel.hpp"
#include "clab/propensity.hpp"

namespace clab {

// k-nearest-neighbor search over a fixed point set with removal.
class NeighborIndex {
 public:
  virtual ~NeighborIndex() = default;
  // Up to k live points nearest to `query` (Euclidean), nearest first; ties
  // go to the lower index.
  virtual std::vector<std::size_t> nearest(const Eigen::VectorXd& query, std::size_t k) const = 0;
  virtual void remove(std::size_t point) = 0;
};

class ExactNeighborIndex final : public NeighborIndex {
 public:
  explicit ExactNeighborIndex(Eigen::MatrixXd points);  // one point per row
  std::vector<std::size_t> nearest(const Eigen::VectorXd& query, std::size_t k) const override;
  void remove(std::size_t point) override;

 private:
  Eigen::MatrixXd points_;
  std::vector<bool> live_;
};

using NeighborIndexFactory = std::function<std::unique_ptr<NeighborIndex>(Eigen::MatrixXd)>;

struct MatchOptions {
  double caliper_mult = 0.1;
  std::size_t shortlist = 50;
  std::size_t min_rows_per_level = 20;
  PropensityOptions propensity;
  NeighborIndexFactory index_factory;  // exact search when empty
  std::size_t threads = 1;
};

// One day's treated and control egos at a single treatment level.
struct MatchInput {
  int day = 0;
  int level = 1;
  std::vector<NodeId> treated, control;
  std::vector<double> treated_logit, control_logit;
  std::vector<int> treated_outcome, control_outcome;
  Eigen::MatrixXd treated_core, control_core;  // raw core covariates, one row per ego
};

struct MatchedPair {
  int day = 0;
  int level = 1;
  NodeId treated = 0;
  NodeId control = 0;
  double logit_gap = 0.0;  // |logit_t - logit_c|
  double standardized_gap = 0.0;  // logit_gap / pooled SD (0 if the SD is 0)
  double mahalanobis = 0.0;
  int treated_outcome = 0;
  int control_outcome = 0;
};

struct DayMatch {
  int day = 0;
  int level = 1;
  std::size_t treated = 0;
  std::size_t controls = 0;
  std::size_t matched = 0;
  double pooled_sd = 0.0;
  double caliper = 0.0;
  double overlap = 0.0;  // treated with at least one control inside the caliper
  double auc = 0.0;
  std::vector<MatchedPair> pairs;
};

// Greedy one-to-one matching without replacement. Treated egos are taken
// in ascending id order; each shortlists the nearest remaining controls in
// the pool-standardized core space, keeps those inside the caliper
// (caliper_mult times the sample SD of all logits), and takes the smallest
// Mahalanobis distance, breaking ties by lower control id.
DayMatch match_day(const MatchInput& input, const MatchOptions& options = {});

struct SkippedDay {
  int day = 0;
  std::string reason;
};

struct MatchResult {
  std::vector<DayMatch> days;  // ordered by (day, level)
  std::vector<SkippedDay> skipped;

  std::vector<MatchedPair> pairs() const;
};

// Per day: fits a propensity model on levels with enough rows, then matches
// each non-zero level against level 0 using the logit of that level's
// probability.
MatchResult match_panel(const TreatmentPanel& panel, const MatchOptions& options = {});

struct RiskTable {
  double a = 0, b = 0, c = 0, d = 0;  // after any correction
  std::size_t raw_a = 0, raw_b = 0, raw_c = 0, raw_d = 0;
  bool corrected = false;
  double rr = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;

  nlohmann::json to_json() const;
};

// Adds 0.5 to every cell if any is zero; Katz log-scale 95% interval.
RiskTable risk_table_from_counts(std::size_t a, std::size_t b, std::size_t c, std::size_t d);

// Throws DataError when there are no pairs.
RiskTable pool_risk_ratio(std::span<const MatchedPair> pairs);

// All treated rows against all level-0 rows, no matching. `level` < 0 pools
// every non-zero level.
RiskTable naive_risk_ratio(const TreatmentPanel& panel, int level = -1);

// Linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

struct LevelDiagnostics {
  int level = 1;
  std::size_t days = 0;
  std::size_t pairs = 0;
  double auc_median = 0, auc_min = 0;
  double dlogit_p50 = 0, dlogit_p90 = 0;
  double dlogit_std_p50 = 0, dlogit_std_p90 = 0;
  double distance_p50 = 0, distance_p90 = 0;
  double overlap_median = 0;
};

std::vector<LevelDiagnostics> diagnostics(const MatchResult& result);

nlohmann::json diagnostics_json(std::span<const LevelDiagnostics> diags, TreatmentKind kind);

void write_pairs_csv(std::span<const MatchedPair> pairs, const DirectedGraph& g, const std::filesystem::path& path);

}  // namespace clab
