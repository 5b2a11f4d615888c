#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "clab/graph.hpp"
#include "clab/shocks.hpp"

namespace clab {

inline constexpr std::size_t kFeatureCount = 7;

// Canonical column order of the feature matrix.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "m", "k", "saturation", "exposure_duration", "influence_recency", "shock_intensity",
    "shock_recency"};

enum FeatureIndex : std::size_t {
  kActiveInfluences = 0,
  kDegree,
  kSaturation,
  kExposureDuration,
  kInfluenceRecency,
  kShockIntensity,
  kShockRecency,
};

// Egocentric state of an adopter on its adoption day. Undefined durations
// use the sentinel -1.
struct FeatureVector {
  double active_influences = 0;  // m
  double degree = 0;             // k
  double peer_saturation = 0;    // m / k, 0 when k == 0
  double exposure_duration = -1;
  double influence_recency = -1;
  double shock_intensity = 0;
  double shock_recency = -1;

  std::array<double, kFeatureCount> to_array() const {
    return {active_influences, degree,          peer_saturation, exposure_duration,
            influence_recency, shock_intensity, shock_recency};
  }
  static FeatureVector from_array(std::span<const double> x);

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Assembles a feature vector from exposure bookkeeping. `first_exposure` and
// `last_exposure` are the earliest and latest followee adoption days before
// `day` (ignored when m == 0).
FeatureVector make_features(std::size_t m, std::size_t k, int first_exposure, int last_exposure,
                            const ShockSchedule& shocks, int day);

// Features of node u adopting on day t_u, counting followees with adoption
// day strictly before t_u. `adoption_days` holds one entry per node with
// kNever for non-adopters. Throws std::out_of_range for a bad node id.
FeatureVector extract_features(const DirectedGraph& g, std::span<const int> adoption_days,
                               const ShockSchedule& shocks, NodeId u, int t_u);

// Row of the feature-matrix CSV with an optional label column.
struct FeatureRow {
  std::string node;
  int day = 0;
  FeatureVector x;
  std::optional<int> label;
};

// Columns: node,day,m,k,saturation,exposure_duration,influence_recency,
// shock_intensity,shock_recency[,label]
void write_feature_csv(std::span<const FeatureRow> rows, const std::filesystem::path& path);
std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path);

}  // namespace clab
