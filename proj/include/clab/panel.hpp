#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "clab/adoption_log.hpp"
#include "clab/graph.hpp"

namespace clab {

enum class TreatmentKind { Timing, Dose };
enum class Placebo { None, Future, Permute };

std::string_view to_string(TreatmentKind k);
TreatmentKind parse_treatment_kind(std::string_view text);
std::string_view to_string(Placebo p);
Placebo parse_placebo(std::string_view text);

// Dose levels are neighbor-adoption counts capped at 4; level 4 reads "3+".
inline constexpr int kDoseLevels = 5;
std::string dose_label(int level);

// Exposure windows, all excluding the outcome day D:
//   timing   [D-d, D-1]         level 1 if any neighbor adopted in it
//   dose     [D-7, D-1]         level min(count, 4)
//   future   [D+1, D+d] (timing) or [D+1, D+7] (dose)
//   permute  the dose/timing level reassigned at random within each day
struct PanelSpec {
  TreatmentKind kind = TreatmentKind::Timing;
  int d = 1;
  Direction direction = Direction::Followee;
  Placebo placebo = Placebo::None;
  std::uint64_t seed = 0;
  int covariate_lag = 7;
  // Outcome days; defaults to [log.first_day + covariate_lag, log.last_day].
  int first_day = -1;
  int last_day = -1;
  int day_stride = 1;
};

struct CovariateSchema {
  std::vector<std::string> names;
  std::vector<bool> core;  // columns used for shortlisting and Mahalanobis distance

  std::size_t size() const { return names.size(); }
  std::vector<std::size_t> core_indices() const;
  void append(std::string name, bool is_core);

  nlohmann::json to_json() const;
  static CovariateSchema from_json(const nlohmann::json& j);
};

// Covariates of `ego` for outcome day `day`; must return schema.size() values.
using CovariateFn = std::function<std::vector<double>(NodeId ego, int day)>;

struct TreatmentPanel {
  TreatmentKind kind = TreatmentKind::Timing;
  CovariateSchema schema;
  std::vector<NodeId> ego;
  std::vector<int> day;
  std::vector<int> outcome;    // 1 if the ego adopts on `day`
  std::vector<int> treatment;  // level
  Eigen::MatrixXd covariates;  // rows x schema.size()

  std::size_t rows() const { return ego.size(); }
  int level_count() const { return kind == TreatmentKind::Dose ? kDoseLevels : 2; }

  // Row ranges [begin, end) per day, in ascending day order.
  struct DaySlice {
    int day;
    std::size_t begin;
    std::size_t end;
  };
  std::vector<DaySlice> day_slices() const;
};

// Eleven network covariates measured from adoptions strictly before
// day - lag: adopted followee/follower/mutual counts and fractions, in, out
// and mutual degree, log1p(in), log1p(out). All are core.
CovariateSchema network_covariate_schema();
CovariateFn make_network_covariates(const DirectedGraph& g, std::span<const int> adoption_days, int lag = 7);

// Rows are ordered by day, then ego. The risk set on day D holds every ego
// that has not adopted before D. Throws DataError if the covariate function
// returns the wrong number of values.
TreatmentPanel build_panel(const DirectedGraph& g, const AdoptionLog& log, const CovariateSchema& schema,
                           const CovariateFn& covariates, const PanelSpec& spec);

// Network covariates plus optional per-node static columns (non-core).
TreatmentPanel build_network_panel(const DirectedGraph& g, const AdoptionLog& log, const PanelSpec& spec,
                                   const std::vector<std::string>& static_names = {},
                                   const std::vector<std::vector<double>>& static_values = {});

// CSV `ego,day,outcome,treatment,cov_1..cov_p` with a JSON schema sidecar.
void write_panel(const TreatmentPanel& panel, const DirectedGraph& g, const std::filesystem::path& csv,
                 const std::filesystem::path& schema_json);
TreatmentPanel read_panel(const std::filesystem::path& csv, const std::filesystem::path& schema_json,
                          const DirectedGraph& g);

}  // namespace clab
