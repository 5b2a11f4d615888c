#include "clab/adoption_log.hpp"

#include <algorithm>
#include <fstream>

#include "clab/csv.hpp"
#include "clab/error.hpp"

namespace clab {

void AdoptionLog::validate(std::size_t node_count) const {
  if (last_day < first_day) throw DataError("adoption log horizon is empty");
  std::vector<char> seen(node_count, 0);
  for (const auto& r : records) {
    if (r.node >= node_count) throw DataError("adoption record node out of range");
    if (seen[r.node]) throw DataError("node adopts more than once: " + std::to_string(r.node));
    seen[r.node] = 1;
    if (r.day < first_day || r.day > last_day) {
      throw DataError("adoption day " + std::to_string(r.day) + " outside horizon");
    }
  }
}

std::vector<int> AdoptionLog::adoption_days(std::size_t node_count) const {
  std::vector<int> days(node_count, kNever);
  for (const auto& r : records) {
    if (r.node >= node_count) throw DataError("adoption record node out of range");
    days[r.node] = r.day;
  }
  return days;
}

bool AdoptionLog::in_shock_period(int day) const {
  return std::any_of(shock_periods.begin(), shock_periods.end(),
                     [day](const ShockRange& r) { return day >= r.first && day <= r.last; });
}

AdoptionSeries AdoptionLog::daily_counts() const {
  AdoptionSeries series;
  series.counts.assign(static_cast<std::size_t>(last_day - first_day + 1), 0);
  for (const auto& r : records) {
    if (r.day >= first_day && r.day <= last_day) ++series.counts[static_cast<std::size_t>(r.day - first_day)];
  }
  return series;
}

std::vector<Adoption> AdoptionLog::sorted_records() const {
  auto out = records;
  std::sort(out.begin(), out.end(), [](const Adoption& a, const Adoption& b) {
    return a.day != b.day ? a.day < b.day : a.node < b.node;
  });
  return out;
}

AdoptionLog load_adoption_log(const std::filesystem::path& path, const DirectedGraph& g,
                              int first_day, int last_day) {
  AdoptionLog log;
  int max_day = first_day;
  csv::read_rows(path, {"node", "day"}, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 2) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": expected node,day");
    }
    const auto node = g.find(f[0]);
    if (!node) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": unknown node '" + f[0] + "'");
    }
    const auto day = static_cast<int>(csv::parse_int(f[1], line));
    log.records.push_back({*node, day});
    max_day = std::max(max_day, day);
  });
  log.first_day = first_day;
  log.last_day = last_day >= 0 ? last_day : max_day;
  log.validate(g.node_count());
  return log;
}

void write_adoption_log(const AdoptionLog& log, const DirectedGraph& g,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "node,day\n";
  for (const auto& r : log.sorted_records()) out << csv::escape(g.external_id(r.node)) << ',' << r.day << '\n';
}

}  // namespace clab
