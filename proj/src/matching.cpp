#include "clab/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "clab/csv.hpp"
#include "clab/error.hpp"
#include "clab/parallel.hpp"

namespace clab {

ExactNeighborIndex::ExactNeighborIndex(Eigen::MatrixXd points)
    : points_(std::move(points)), live_(static_cast<std::size_t>(points_.rows()), true) {}

std::vector<std::size_t> ExactNeighborIndex::nearest(const Eigen::VectorXd& query, std::size_t k) const {
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(live_.size());
  for (std::size_t i = 0; i < live_.size(); ++i) {
    if (!live_[i]) continue;
    cand.emplace_back((points_.row(static_cast<Eigen::Index>(i)).transpose() - query).squaredNorm(), i);
  }
  k = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = cand[i].second;
  return out;
}

void ExactNeighborIndex::remove(std::size_t point) { live_.at(point) = false; }

namespace {

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

DayMatch match_day(const MatchInput& in, const MatchOptions& options) {
  const std::size_t nt = in.treated.size(), nc = in.control.size();
  if (in.treated_logit.size() != nt || in.treated_outcome.size() != nt ||
      static_cast<std::size_t>(in.treated_core.rows()) != nt || in.control_logit.size() != nc ||
      in.control_outcome.size() != nc || static_cast<std::size_t>(in.control_core.rows()) != nc ||
      in.treated_core.cols() != in.control_core.cols()) {
    throw DataError("inconsistent match input sizes");
  }
  DayMatch out;
  out.day = in.day;
  out.level = in.level;
  out.treated = nt;
  out.controls = nc;
  if (nt == 0 || nc == 0) return out;

  std::vector<double> all = in.treated_logit;
  all.insert(all.end(), in.control_logit.begin(), in.control_logit.end());
  out.pooled_sd = sample_sd(all);
  out.caliper = options.caliper_mult * out.pooled_sd;

  // Overlap against the full control pool.
  std::vector<double> sorted_control = in.control_logit;
  std::sort(sorted_control.begin(), sorted_control.end());
  std::size_t covered = 0;
  for (double lt : in.treated_logit) {
    const auto it = std::lower_bound(sorted_control.begin(), sorted_control.end(), lt);
    const bool above = it != sorted_control.end() && std::abs(*it - lt) <= out.caliper;
    const bool below = it != sorted_control.begin() && std::abs(*(it - 1) - lt) <= out.caliper;
    if (above || below) ++covered;
  }
  out.overlap = static_cast<double>(covered) / static_cast<double>(nt);

  // Standardize core features on the pool.
  const Eigen::Index p = in.treated_core.cols();
  Eigen::MatrixXd pool(static_cast<Eigen::Index>(nt + nc), p);
  pool << in.treated_core, in.control_core;
  const Eigen::RowVectorXd mean = pool.colwise().mean();
  Eigen::RowVectorXd sd(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    const double s = std::sqrt((pool.col(c).array() - mean(c)).square().mean());
    sd(c) = s > 1e-12 ? s : 1.0;
  }
  const auto standardize = [&](const Eigen::MatrixXd& m) {
    return ((m.rowwise() - mean).array().rowwise() / sd.array()).matrix();
  };
  const Eigen::MatrixXd zt = standardize(in.treated_core);
  const Eigen::MatrixXd zc = standardize(in.control_core);
  const Eigen::MatrixXd zpool = standardize(pool);
  Eigen::MatrixXd cov = (zpool.transpose() * zpool) / static_cast<double>(zpool.rows());
  cov.diagonal().array() += 1e-6;
  const Eigen::LDLT<Eigen::MatrixXd> cov_ldlt(cov);

  std::unique_ptr<NeighborIndex> index =
      options.index_factory ? options.index_factory(zc) : std::make_unique<ExactNeighborIndex>(zc);

  std::vector<std::size_t> order(nt);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return in.treated[a] < in.treated[b]; });

  for (std::size_t t : order) {
    const Eigen::VectorXd q = zt.row(static_cast<Eigen::Index>(t)).transpose();
    const auto shortlist = index->nearest(q, options.shortlist);
    std::optional<std::size_t> best;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c : shortlist) {
      if (std::abs(in.treated_logit[t] - in.control_logit[c]) > out.caliper) continue;
      const Eigen::VectorXd delta = q - zc.row(static_cast<Eigen::Index>(c)).transpose();
      const double dist = std::sqrt(std::max(0.0, delta.dot(cov_ldlt.solve(delta))));
      if (dist < best_dist || (dist == best_dist && best && in.control[c] < in.control[*best])) {
        best = c;
        best_dist = dist;
      }
    }
    if (!best) continue;
    index->remove(*best);
    MatchedPair pair;
    pair.day = in.day;
    pair.level = in.level;
    pair.treated = in.treated[t];
    pair.control = in.control[*best];
    pair.logit_gap = std::abs(in.treated_logit[t] - in.control_logit[*best]);
    pair.standardized_gap = out.pooled_sd > 0 ? pair.logit_gap / out.pooled_sd : 0.0;
    pair.mahalanobis = best_dist;
    pair.treated_outcome = in.treated_outcome[t];
    pair.control_outcome = in.control_outcome[*best];
    out.pairs.push_back(pair);
  }
  out.matched = out.pairs.size();
  return out;
}

std::vector<MatchedPair> MatchResult::pairs() const {
  std::vector<MatchedPair> out;
  for (const auto& d : days) out.insert(out.end(), d.pairs.begin(), d.pairs.end());
  return out;
}

namespace {

struct DayOutcome {
  std::vector<DayMatch> matches;
  std::vector<SkippedDay> skipped;
};

DayOutcome match_one_day(const TreatmentPanel& panel, const TreatmentPanel::DaySlice& slice,
                         const MatchOptions& options) {
  DayOutcome out;
  const int levels = panel.level_count();
  std::vector<std::size_t> count(static_cast<std::size_t>(levels), 0);
  for (std::size_t r = slice.begin; r < slice.end; ++r) ++count[static_cast<std::size_t>(panel.treatment[r])];

  if (count[0] < options.min_rows_per_level) {
    out.skipped.push_back({slice.day, "insufficient controls (" + std::to_string(count[0]) + ")"});
    return out;
  }
  std::vector<int> kept_levels = {0};
  for (int l = 1; l < levels; ++l) {
    if (count[static_cast<std::size_t>(l)] >= options.min_rows_per_level) {
      kept_levels.push_back(l);
    } else if (count[static_cast<std::size_t>(l)] > 0) {
      out.skipped.push_back({slice.day, "level " + std::to_string(l) + ": insufficient treated (" +
                                            std::to_string(count[static_cast<std::size_t>(l)]) + ")"});
    }
  }
  if (kept_levels.size() < 2) {
    if (out.skipped.empty()) out.skipped.push_back({slice.day, "no treated egos"});
    return out;
  }

  std::vector<std::size_t> rows;
  for (std::size_t r = slice.begin; r < slice.end; ++r) {
    if (std::find(kept_levels.begin(), kept_levels.end(), panel.treatment[r]) != kept_levels.end()) rows.push_back(r);
  }
  const Eigen::Index p = panel.covariates.cols();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), p);
  std::vector<int> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = panel.covariates.row(static_cast<Eigen::Index>(rows[i]));
    y[i] = panel.treatment[rows[i]];
  }
  PropensityModel model;
  try {
    model = fit_propensity(x, y, options.propensity);
  } catch (const ConvergenceError& e) {
    out.skipped.push_back({slice.day, e.what()});
    return out;
  }
  const auto core = panel.schema.core_indices();
  if (core.empty()) throw DataError("covariate schema has no core columns");

  for (std::size_t li = 1; li < kept_levels.size(); ++li) {
    const int level = kept_levels[li];
    const Eigen::VectorXd logit = model.level_logit(x, level);
    MatchInput in;
    in.day = slice.day;
    in.level = level;
    std::vector<double> score;
    std::vector<int> is_treated;
    std::vector<std::size_t> t_idx, c_idx;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (y[i] == level) t_idx.push_back(i);
      else if (y[i] == 0) c_idx.push_back(i);
    }
    const auto fill = [&](const std::vector<std::size_t>& idx, std::vector<NodeId>& ego, std::vector<double>& lg,
                          std::vector<int>& outcome, Eigen::MatrixXd& m) {
      m.resize(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(core.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const std::size_t r = rows[idx[j]];
        ego.push_back(panel.ego[r]);
        lg.push_back(logit(static_cast<Eigen::Index>(idx[j])));
        outcome.push_back(panel.outcome[r]);
        for (std::size_t c = 0; c < core.size(); ++c) {
          m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) =
              panel.covariates(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(core[c]));
        }
      }
    };
    fill(t_idx, in.treated, in.treated_logit, in.treated_outcome, in.treated_core);
    fill(c_idx, in.control, in.control_logit, in.control_outcome, in.control_core);
    auto match = match_day(in, options);
    score = in.treated_logit;
    score.insert(score.end(), in.control_logit.begin(), in.control_logit.end());
    is_treated.assign(in.treated.size(), 1);
    is_treated.resize(score.size(), 0);
    match.auc = roc_auc(score, is_treated);
    out.matches.push_back(std::move(match));
  }
  return out;
}

}  // namespace

MatchResult match_panel(const TreatmentPanel& panel, const MatchOptions& options) {
  const auto slices = panel.day_slices();
  std::vector<DayOutcome> per_day(slices.size());
  parallel_for(slices.size(), options.threads,
               [&](std::size_t i) { per_day[i] = match_one_day(panel, slices[i], options); });
  MatchResult result;
  for (auto& d : per_day) {
    for (auto& m : d.matches) result.days.push_back(std::move(m));
    for (auto& s : d.skipped) result.skipped.push_back(std::move(s));
  }
  return result;
}

RiskTable risk_table_from_counts(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
  RiskTable t;
  t.raw_a = a, t.raw_b = b, t.raw_c = c, t.raw_d = d;
  t.a = static_cast<double>(a), t.b = static_cast<double>(b), t.c = static_cast<double>(c), t.d = static_cast<double>(d);
  if (a == 0 || b == 0 || c == 0 || d == 0) {
    t.corrected = true;
    t.a += 0.5, t.b += 0.5, t.c += 0.5, t.d += 0.5;
  }
  t.rr = (t.a / (t.a + t.b)) / (t.c / (t.c + t.d));
  const double se = std::sqrt(1.0 / t.a - 1.0 / (t.a + t.b) + 1.0 / t.c - 1.0 / (t.c + t.d));
  t.ci_low = std::exp(std::log(t.rr) - 1.96 * se);
  t.ci_high = std::exp(std::log(t.rr) + 1.96 * se);
  return t;
}

RiskTable pool_risk_ratio(std::span<const MatchedPair> pairs) {
  if (pairs.empty()) throw DataError("no matched pairs to pool");
  std::size_t a = 0, b = 0, c = 0, d = 0;
  for (const auto& p : pairs) {
    (p.treated_outcome ? a : b) += 1;
    (p.control_outcome ? c : d) += 1;
  }
  return risk_table_from_counts(a, b, c, d);
}

RiskTable naive_risk_ratio(const TreatmentPanel& panel, int level) {
  std::size_t a = 0, b = 0, c = 0, d = 0;
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    const int t = panel.treatment[r];
    const bool outcome = panel.outcome[r] != 0;
    if (t == 0) {
      (outcome ? c : d) += 1;
    } else if (level < 0 || t == level) {
      (outcome ? a : b) += 1;
    }
  }
  if (a + b == 0 || c + d == 0) throw DataError("naive risk ratio needs treated and control rows");
  return risk_table_from_counts(a, b, c, d);
}

nlohmann::json RiskTable::to_json() const {
  return {{"a", a},   {"b", b},           {"c", c},           {"d", d},
          {"raw", {raw_a, raw_b, raw_c, raw_d}},
          {"corrected", corrected}, {"rr", rr}, {"ci_low", ci_low}, {"ci_high", ci_high}};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<LevelDiagnostics> diagnostics(const MatchResult& result) {
  std::vector<int> levels;
  for (const auto& d : result.days) levels.push_back(d.level);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<LevelDiagnostics> out;
  for (int level : levels) {
    LevelDiagnostics ld;
    ld.level = level;
    std::vector<double> auc, overlap, gap, gap_std, dist;
    for (const auto& d : result.days) {
      if (d.level != level) continue;
      ++ld.days;
      if (!std::isnan(d.auc)) auc.push_back(d.auc);
      overlap.push_back(d.overlap);
      for (const auto& p : d.pairs) {
        gap.push_back(p.logit_gap);
        gap_std.push_back(p.standardized_gap);
        dist.push_back(p.mahalanobis);
      }
    }
    ld.pairs = gap.size();
    ld.auc_median = quantile(auc, 0.5);
    ld.auc_min = auc.empty() ? std::numeric_limits<double>::quiet_NaN() : *std::min_element(auc.begin(), auc.end());
    ld.dlogit_p50 = quantile(gap, 0.5);
    ld.dlogit_p90 = quantile(gap, 0.9);
    ld.dlogit_std_p50 = quantile(gap_std, 0.5);
    ld.dlogit_std_p90 = quantile(gap_std, 0.9);
    ld.distance_p50 = quantile(dist, 0.5);
    ld.distance_p90 = quantile(dist, 0.9);
    ld.overlap_median = quantile(overlap, 0.5);
    out.push_back(ld);
  }
  return out;
}

nlohmann::json diagnostics_json(std::span<const LevelDiagnostics> diags, TreatmentKind kind) {
  const auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : diags) {
    out.push_back({{"level", kind == TreatmentKind::Dose ? dose_label(d.level) : std::to_string(d.level)},
                   {"days", d.days},
                   {"pairs", d.pairs},
                   {"auc_median", num(d.auc_median)},
                   {"auc_min", num(d.auc_min)},
                   {"dlogit_p50", num(d.dlogit_p50)},
                   {"dlogit_p90", num(d.dlogit_p90)},
                   {"dlogit_std_p50", num(d.dlogit_std_p50)},
                   {"dlogit_std_p90", num(d.dlogit_std_p90)},
                   {"distance_p50", num(d.distance_p50)},
                   {"distance_p90", num(d.distance_p90)},
                   {"overlap_median", num(d.overlap_median)}});
  }
  return out;
}

void write_pairs_csv(std::span<const MatchedPair> pairs, const DirectedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "day,treated,control,logit_gap,mahalanobis\n" << std::setprecision(17);
  for (const auto& p : pairs) {
    out << p.day << ',' << csv::escape(g.external_id(p.treated)) << ',' << csv::escape(g.external_id(p.control))
        << ',' << p.logit_gap << ',' << p.mahalanobis << '\n';
  }
}

}  // namespace clab
