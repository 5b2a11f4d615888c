#include "clab/order_test.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>

#include "clab/error.hpp"

namespace clab {

std::string_view to_string(DegreeKind k) {
  switch (k) {
    case DegreeKind::In: return "in";
    case DegreeKind::Out: return "out";
    case DegreeKind::Total: return "total";
  }
  return "?";
}

DegreeKind parse_degree_kind(std::string_view text) {
  if (text == "in") return DegreeKind::In;
  if (text == "out") return DegreeKind::Out;
  if (text == "total") return DegreeKind::Total;
  throw UsageError("degree kind must be in, out or total");
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t q = i; q <= j; ++q) ranks[order[q]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("rank correlation needs equal-length inputs");
  if (x.size() < 3) throw DataError("rank correlation needs at least 3 observations");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DataError("rank correlation undefined: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman_p_value(double rho, std::size_t n) {
  if (n < 3) throw DataError("p-value needs at least 3 observations");
  if (std::abs(rho) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = rho * std::sqrt(df / (1.0 - rho * rho));
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

OrderTestResult degree_order_test(const DirectedGraph& g, const AdoptionLog& log, DegreeKind kind) {
  log.validate(g.node_count());
  if (log.records.size() < 3) throw DataError("degree-order test needs at least 3 adopters");
  std::vector<double> degree, day;
  for (const auto& r : log.records) {
    double k = 0;
    switch (kind) {
      case DegreeKind::In: k = static_cast<double>(g.in_degree(r.node)); break;
      case DegreeKind::Out: k = static_cast<double>(g.out_degree(r.node)); break;
      case DegreeKind::Total: k = static_cast<double>(g.in_degree(r.node) + g.out_degree(r.node)); break;
    }
    degree.push_back(k);
    day.push_back(static_cast<double>(r.day));
  }
  OrderTestResult out;
  out.n = degree.size();
  out.rho = spearman_rho(degree, day);
  out.p_value = spearman_p_value(out.rho, out.n);
  return out;
}

nlohmann::json OrderTestResult::to_json() const {
  return {{"rho", rho}, {"p_value", p_value}, {"n", n}};
}

}  // namespace clab
