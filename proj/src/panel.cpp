#include "clab/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <nlohmann/json.hpp>

#include "clab/csv.hpp"
#include "clab/error.hpp"
#include "clab/rng.hpp"

namespace clab {

std::string_view to_string(TreatmentKind k) { return k == TreatmentKind::Dose ? "dose" : "timing"; }

TreatmentKind parse_treatment_kind(std::string_view text) {
  if (text == "timing") return TreatmentKind::Timing;
  if (text == "dose") return TreatmentKind::Dose;
  throw UsageError("treatment kind must be timing or dose");
}

std::string_view to_string(Placebo p) {
  switch (p) {
    case Placebo::None: return "none";
    case Placebo::Future: return "future";
    case Placebo::Permute: return "permute";
  }
  return "?";
}

Placebo parse_placebo(std::string_view text) {
  if (text == "none") return Placebo::None;
  if (text == "future") return Placebo::Future;
  if (text == "permute") return Placebo::Permute;
  throw UsageError("placebo must be none, future or permute");
}

std::string dose_label(int level) { return level >= 4 ? "3+" : std::to_string(level); }

std::vector<std::size_t> CovariateSchema::core_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < core.size(); ++i) {
    if (core[i]) out.push_back(i);
  }
  return out;
}

void CovariateSchema::append(std::string name, bool is_core) {
  names.push_back(std::move(name));
  core.push_back(is_core);
}

nlohmann::json CovariateSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (std::size_t i = 0; i < names.size(); ++i) cols.push_back({{"name", names[i]}, {"core", bool(core[i])}});
  return {{"covariates", cols}};
}

CovariateSchema CovariateSchema::from_json(const nlohmann::json& j) {
  CovariateSchema s;
  try {
    for (const auto& c : j.at("covariates")) s.append(c.at("name").get<std::string>(), c.value("core", false));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad covariate schema: ") + e.what());
  }
  return s;
}

std::vector<TreatmentPanel::DaySlice> TreatmentPanel::day_slices() const {
  std::vector<DaySlice> out;
  std::size_t i = 0;
  while (i < day.size()) {
    std::size_t j = i;
    while (j < day.size() && day[j] == day[i]) ++j;
    out.push_back({day[i], i, j});
    i = j;
  }
  return out;
}

namespace {

// Per ego, sorted adoption days of its neighbors in one direction (adopters only).
std::vector<std::vector<int>> neighbor_days(const DirectedGraph& g, std::span<const int> days, Direction dir) {
  std::vector<std::vector<int>> out(g.node_count());
  for (NodeId i = 0; i < g.node_count(); ++i) {
    for (NodeId v : g.neighbors(i, dir)) {
      if (days[v] != kNever) out[i].push_back(days[v]);
    }
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

// Neighbors adopting within [lo, hi].
std::size_t count_in(const std::vector<int>& sorted, int lo, int hi) {
  if (hi < lo) return 0;
  return static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), hi) -
                                  std::lower_bound(sorted.begin(), sorted.end(), lo));
}

std::size_t count_before(const std::vector<int>& sorted, int cutoff) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), cutoff) - sorted.begin());
}

}  // namespace

CovariateSchema network_covariate_schema() {
  CovariateSchema s;
  for (const char* name : {"adopted_followees", "adopted_followee_fraction", "adopted_followers",
                           "adopted_follower_fraction", "adopted_mutuals", "adopted_mutual_fraction",
                           "in_degree", "out_degree", "mutual_degree", "log1p_in_degree", "log1p_out_degree"}) {
    s.append(name, true);
  }
  return s;
}

CovariateFn make_network_covariates(const DirectedGraph& g, std::span<const int> adoption_days, int lag) {
  if (adoption_days.size() != g.node_count()) throw DataError("adoption days must cover every node");
  struct Lists {
    std::vector<std::vector<int>> followee, follower, mutual;
    std::vector<DegreeTriple> deg;
  };
  auto lists = std::make_shared<Lists>();
  lists->followee = neighbor_days(g, adoption_days, Direction::Followee);
  lists->follower = neighbor_days(g, adoption_days, Direction::Follower);
  lists->mutual = neighbor_days(g, adoption_days, Direction::Mutual);
  lists->deg = degrees(g);
  return [lists, lag](NodeId ego, int day) {
    const int cutoff = day - lag;
    const auto& k = lists->deg[ego];
    const auto frac = [](std::size_t a, std::size_t n) {
      return n ? static_cast<double>(a) / static_cast<double>(n) : 0.0;
    };
    const std::size_t fe = count_before(lists->followee[ego], cutoff);
    const std::size_t fr = count_before(lists->follower[ego], cutoff);
    const std::size_t mu = count_before(lists->mutual[ego], cutoff);
    return std::vector<double>{static_cast<double>(fe), frac(fe, k.in),
                               static_cast<double>(fr), frac(fr, k.out),
                               static_cast<double>(mu), frac(mu, k.mutual),
                               static_cast<double>(k.in), static_cast<double>(k.out),
                               static_cast<double>(k.mutual), std::log1p(static_cast<double>(k.in)),
                               std::log1p(static_cast<double>(k.out))};
  };
}

TreatmentPanel build_panel(const DirectedGraph& g, const AdoptionLog& log, const CovariateSchema& schema,
                           const CovariateFn& covariates, const PanelSpec& spec) {
  log.validate(g.node_count());
  if (spec.kind == TreatmentKind::Timing && spec.d < 1) throw UsageError("timing window d must be at least 1");
  if (spec.day_stride < 1) throw UsageError("day stride must be at least 1");
  const int first = spec.first_day >= 0 ? spec.first_day : log.first_day + spec.covariate_lag;
  const int last = spec.last_day >= 0 ? spec.last_day : log.last_day;

  const auto days = log.adoption_days(g.node_count());
  const auto exposure = neighbor_days(g, days, spec.direction);
  const int width = spec.kind == TreatmentKind::Dose ? 7 : spec.d;

  TreatmentPanel panel;
  panel.kind = spec.kind;
  panel.schema = schema;
  std::vector<double> values;
  for (int day = first; day <= last; day += spec.day_stride) {
    const std::size_t day_begin = panel.rows();
    for (NodeId ego = 0; ego < g.node_count(); ++ego) {
      if (days[ego] < day) continue;
      int lo = day - width, hi = day - 1;
      if (spec.placebo == Placebo::Future) lo = day + 1, hi = day + width;
      const std::size_t count = count_in(exposure[ego], lo, hi);
      const int level = spec.kind == TreatmentKind::Dose ? static_cast<int>(std::min<std::size_t>(count, 4))
                                                         : (count > 0 ? 1 : 0);
      const auto x = covariates(ego, day);
      if (x.size() != schema.size()) {
        throw DataError("covariates for ego " + g.external_id(ego) + " on day " + std::to_string(day) + " have " +
                        std::to_string(x.size()) + " values, schema has " + std::to_string(schema.size()));
      }
      panel.ego.push_back(ego);
      panel.day.push_back(day);
      panel.outcome.push_back(days[ego] == day ? 1 : 0);
      panel.treatment.push_back(level);
      values.insert(values.end(), x.begin(), x.end());
    }
    if (spec.placebo == Placebo::Permute) {
      Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(day)));
      rng.shuffle(panel.treatment.begin() + static_cast<std::ptrdiff_t>(day_begin), panel.treatment.end());
    }
  }
  const auto p = static_cast<Eigen::Index>(schema.size());
  panel.covariates.resize(static_cast<Eigen::Index>(panel.rows()), p);
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    for (Eigen::Index c = 0; c < p; ++c) {
      panel.covariates(static_cast<Eigen::Index>(r), c) = values[r * schema.size() + static_cast<std::size_t>(c)];
    }
  }
  return panel;
}

TreatmentPanel build_network_panel(const DirectedGraph& g, const AdoptionLog& log, const PanelSpec& spec,
                                   const std::vector<std::string>& static_names,
                                   const std::vector<std::vector<double>>& static_values) {
  if (static_values.size() != static_names.size()) throw DataError("static covariate names and columns differ");
  for (const auto& col : static_values) {
    if (col.size() != g.node_count()) throw DataError("static covariate column must cover every node");
  }
  auto schema = network_covariate_schema();
  for (const auto& name : static_names) schema.append(name, false);
  const auto base = make_network_covariates(g, log.adoption_days(g.node_count()), spec.covariate_lag);
  return build_panel(g, log, schema,
                     [&](NodeId ego, int day) {
                       auto x = base(ego, day);
                       for (const auto& col : static_values) x.push_back(col[ego]);
                       return x;
                     },
                     spec);
}

void write_panel(const TreatmentPanel& panel, const DirectedGraph& g, const std::filesystem::path& csv,
                 const std::filesystem::path& schema_json) {
  std::ofstream out(csv);
  if (!out) throw DataError("cannot write " + csv.string());
  out << "ego,day,outcome,treatment";
  for (std::size_t c = 0; c < panel.schema.size(); ++c) out << ",cov_" << (c + 1);
  out << '\n' << std::setprecision(17);
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    out << csv::escape(g.external_id(panel.ego[r])) << ',' << panel.day[r] << ',' << panel.outcome[r] << ','
        << panel.treatment[r];
    for (Eigen::Index c = 0; c < panel.covariates.cols(); ++c) {
      out << ',' << panel.covariates(static_cast<Eigen::Index>(r), c);
    }
    out << '\n';
  }
  auto j = panel.schema.to_json();
  j["kind"] = to_string(panel.kind);
  std::ofstream js(schema_json);
  if (!js) throw DataError("cannot write " + schema_json.string());
  js << j.dump(2) << '\n';
}

TreatmentPanel read_panel(const std::filesystem::path& csv, const std::filesystem::path& schema_json,
                          const DirectedGraph& g) {
  std::ifstream js(schema_json);
  if (!js) throw DataError("cannot open " + schema_json.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(schema_json.string() + ": " + e.what());
  }
  TreatmentPanel panel;
  panel.schema = CovariateSchema::from_json(j);
  panel.kind = parse_treatment_kind(j.value("kind", std::string("timing")));
  std::vector<std::string> header = {"ego", "day", "outcome", "treatment"};
  for (std::size_t c = 0; c < panel.schema.size(); ++c) header.push_back("cov_" + std::to_string(c + 1));
  std::vector<double> values;
  csv::read_rows(csv, header, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != header.size()) {
      throw DataError(csv.string() + ": line " + std::to_string(line) + ": expected " +
                      std::to_string(header.size()) + " fields");
    }
    const auto ego = g.find(f[0]);
    if (!ego) throw DataError(csv.string() + ": line " + std::to_string(line) + ": unknown ego '" + f[0] + "'");
    const int day = static_cast<int>(csv::parse_int(f[1], line));
    if (!panel.day.empty() && day < panel.day.back()) {
      throw DataError(csv.string() + ": line " + std::to_string(line) + ": rows must be ordered by day");
    }
    const int outcome = static_cast<int>(csv::parse_int(f[2], line));
    const int level = static_cast<int>(csv::parse_int(f[3], line));
    if (outcome != 0 && outcome != 1) throw DataError(csv.string() + ": line " + std::to_string(line) + ": bad outcome");
    if (level < 0 || level >= panel.level_count()) {
      throw DataError(csv.string() + ": line " + std::to_string(line) + ": treatment level out of range");
    }
    panel.ego.push_back(*ego);
    panel.day.push_back(day);
    panel.outcome.push_back(outcome);
    panel.treatment.push_back(level);
    for (std::size_t c = 0; c < panel.schema.size(); ++c) values.push_back(csv::parse_double(f[4 + c], line));
  });
  const auto p = static_cast<Eigen::Index>(panel.schema.size());
  panel.covariates.resize(static_cast<Eigen::Index>(panel.rows()), p);
  for (std::size_t r = 0; r < panel.rows(); ++r) {
    for (Eigen::Index c = 0; c < p; ++c) {
      panel.covariates(static_cast<Eigen::Index>(r), c) = values[r * panel.schema.size() + static_cast<std::size_t>(c)];
    }
  }
  return panel;
}

}  // namespace clab
