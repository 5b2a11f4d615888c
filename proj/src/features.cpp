#include "clab/features.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>

#include "clab/adoption_log.hpp"
#include "clab/cascade.hpp"
#include "clab/csv.hpp"
#include "clab/error.hpp"

namespace clab {

FeatureVector FeatureVector::from_array(std::span<const double> x) {
  if (x.size() != kFeatureCount) {
    throw DataError("feature vector must have " + std::to_string(kFeatureCount) + " entries");
  }
  return {x[0], x[1], x[2], x[3], x[4], x[5], x[6]};
}

FeatureVector make_features(std::size_t m, std::size_t k, int first_exposure, int last_exposure,
                            const ShockSchedule& shocks, int day) {
  FeatureVector f;
  f.active_influences = static_cast<double>(m);
  f.degree = static_cast<double>(k);
  f.peer_saturation = k > 0 ? static_cast<double>(m) / static_cast<double>(k) : 0.0;
  if (m > 0) {
    f.exposure_duration = day - first_exposure;
    f.influence_recency = day - last_exposure;
  }
  f.shock_intensity = shocks.intensity(day);
  f.shock_recency = shocks.recency(day);
  return f;
}

FeatureVector extract_features(const DirectedGraph& g, std::span<const int> adoption_days,
                               const ShockSchedule& shocks, NodeId u, int t_u) {
  if (u >= g.node_count()) throw std::out_of_range("node id out of range");
  if (adoption_days.size() != g.node_count()) throw DataError("adoption days must cover every node");
  std::size_t m = 0;
  int first = std::numeric_limits<int>::max();
  int last = std::numeric_limits<int>::min();
  for (NodeId v : g.followees(u)) {
    const int t_v = adoption_days[v];
    if (t_v < t_u) {
      ++m;
      first = std::min(first, t_v);
      last = std::max(last, t_v);
    }
  }
  return make_features(m, g.in_degree(u), first, last, shocks, t_u);
}

void write_feature_csv(std::span<const FeatureRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const bool labeled = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.label.has_value(); });
  out << "node,day";
  for (auto name : kFeatureNames) out << ',' << name;
  if (labeled) out << ",label";
  out << '\n';
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << csv::escape(r.node) << ',' << r.day;
    for (double v : r.x.to_array()) out << ',' << v;
    if (labeled) out << ',' << (r.label ? to_string(static_cast<Mechanism>(*r.label)) : "");
    out << '\n';
  }
}

std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path) {
  std::vector<std::string> header = {"node", "day"};
  header.insert(header.end(), kFeatureNames.begin(), kFeatureNames.end());
  std::vector<FeatureRow> rows;
  csv::read_rows(path, header, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != header.size() && f.size() != header.size() + 1) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": wrong column count");
    }
    FeatureRow row;
    row.node = f[0];
    row.day = static_cast<int>(csv::parse_int(f[1], line));
    std::array<double, kFeatureCount> x{};
    for (std::size_t c = 0; c < kFeatureCount; ++c) x[c] = csv::parse_double(f[2 + c], line);
    row.x = FeatureVector::from_array(x);
    if (f.size() == header.size() + 1 && !f.back().empty()) {
      row.label = static_cast<int>(parse_mechanism(f.back()));
    }
    rows.push_back(std::move(row));
  });
  return rows;
}

}  // namespace clab
