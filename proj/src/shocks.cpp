#include "clab/shocks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "clab/csv.hpp"
#include "clab/error.hpp"

namespace clab {

ShockSchedule::ShockSchedule(std::vector<Shock> shocks) : shocks_(std::move(shocks)) {
  double max_gamma = 0.0;
  for (std::size_t j = 0; j < shocks_.size(); ++j) {
    const auto& s = shocks_[j];
    if (j > 0 && s.tau <= shocks_[j - 1].tau) {
      throw DataError("shock peaks must be strictly increasing");
    }
    if (!(s.alpha > 0.0) || !std::isfinite(s.alpha)) throw DataError("shock alpha must be > 0");
    if (!(s.gamma > 0.0) || s.gamma > 1.0 + 1e-12) throw DataError("shock gamma must be in (0, 1]");
    max_gamma = std::max(max_gamma, s.gamma);
  }
  if (!shocks_.empty() && std::abs(max_gamma - 1.0) > 1e-9) {
    throw DataError("largest shock gamma must equal 1");
  }
}

ShockSchedule ShockSchedule::normalized(std::vector<Shock> shocks) {
  double max_gamma = 0.0;
  for (const auto& s : shocks) max_gamma = std::max(max_gamma, s.gamma);
  if (!shocks.empty() && !(max_gamma > 0.0)) throw DataError("shock heights must be positive");
  for (auto& s : shocks) s.gamma /= max_gamma;
  return ShockSchedule(std::move(shocks));
}

int ShockSchedule::active_index(int day) const {
  const auto it = std::upper_bound(shocks_.begin(), shocks_.end(), day,
                                   [](int d, const Shock& s) { return d < s.tau; });
  return static_cast<int>(it - shocks_.begin()) - 1;
}

double ShockSchedule::intensity(int day) const {
  const int j = active_index(day);
  if (j < 0) return 0.0;
  const auto& s = shocks_[static_cast<std::size_t>(j)];
  return s.gamma * std::pow(static_cast<double>(day - s.tau + 1), -s.alpha);
}

int ShockSchedule::recency(int day) const {
  const int j = active_index(day);
  if (j < 0) return -1;
  return day - shocks_[static_cast<std::size_t>(j)].tau;
}

nlohmann::json ShockSchedule::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : shocks_) out.push_back({{"tau", s.tau}, {"gamma", s.gamma}, {"alpha", s.alpha}});
  return out;
}

ShockSchedule ShockSchedule::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("shock schedule must be a JSON array");
  std::vector<Shock> shocks;
  for (const auto& item : j) {
    try {
      shocks.push_back({item.at("tau").get<int>(), item.at("gamma").get<double>(),
                        item.at("alpha").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("bad shock record: ") + e.what());
    }
  }
  return ShockSchedule(std::move(shocks));
}

ShockSchedule ShockSchedule::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

AdoptionSeries AdoptionSeries::load(const std::filesystem::path& path) {
  std::map<std::int64_t, std::int64_t> by_day;
  csv::read_rows(path, {"day", "count"}, [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 2) throw DataError(path.string() + ": line " + std::to_string(line) + ": expected day,count");
    const auto day = csv::parse_int(f[0], line);
    const auto count = csv::parse_int(f[1], line);
    if (day < 0 || count < 0) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": negative day or count");
    }
    if (!by_day.emplace(day, count).second) {
      throw DataError(path.string() + ": line " + std::to_string(line) + ": duplicate day");
    }
  });
  AdoptionSeries series;
  if (by_day.empty()) throw DataError(path.string() + ": no records");
  series.counts.assign(static_cast<std::size_t>(by_day.rbegin()->first + 1), 0);
  for (const auto& [day, count] : by_day) series.counts[static_cast<std::size_t>(day)] = count;
  return series;
}

std::vector<ShockRange> detect_shocks(std::span<const std::int64_t> counts,
                                      const DetectOptions& options) {
  const auto window = static_cast<std::size_t>(options.window);
  if (options.window < 2) throw DataError("detection window must be at least 2 days");
  if (counts.size() <= window) throw DataError("series must be longer than the detection window");

  std::vector<ShockRange> ranges;
  for (std::size_t t = window; t < counts.size(); ++t) {
    const auto value = counts[t];
    bool flagged = false;
    if (value >= options.min_count) {
      double mean = 0.0;
      for (std::size_t s = t - window; s < t; ++s) mean += static_cast<double>(counts[s]);
      mean /= static_cast<double>(window);
      double ss = 0.0;
      for (std::size_t s = t - window; s < t; ++s) {
        const double d = static_cast<double>(counts[s]) - mean;
        ss += d * d;
      }
      const double sd = std::sqrt(ss / static_cast<double>(window - 1));
      flagged = static_cast<double>(value) > mean + options.z * sd;
    }
    if (!flagged) continue;
    const int day = static_cast<int>(t);
    if (!ranges.empty() && ranges.back().last == day - 1) {
      auto& r = ranges.back();
      r.last = day;
      if (value > r.peak_count) {
        r.peak = day;
        r.peak_count = value;
      }
    } else {
      ranges.push_back({day, day, day, value});
    }
  }
  return ranges;
}

namespace {

double median_of(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid))) / 2.0;
  }
  return m;
}

}  // namespace

PowerLawFit fit_power_law(std::span<const double> counts, int peak,
                          const PowerLawFitOptions& options) {
  if (peak < 0 || static_cast<std::size_t>(peak) >= counts.size()) {
    throw DataError("peak day outside the series");
  }
  const std::size_t end = options.end_day < 0
                              ? counts.size()
                              : std::min(counts.size(), static_cast<std::size_t>(options.end_day));
  std::vector<double> x, y;
  for (std::size_t t = static_cast<std::size_t>(peak); t < end; ++t) {
    if (counts[t] > 0.0) {
      x.push_back(std::log(static_cast<double>(t) - peak + 1.0));
      y.push_back(std::log(counts[t]));
    }
  }
  const std::size_t n = x.size();
  if (n < 3) throw DataError("power-law fit needs at least 3 positive post-peak counts");

  // Weighted least squares for y = c + b x.
  std::vector<double> w(n, 1.0), resid(n);
  auto solve = [&](double& c, double& b) {
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sw += w[i];
      sx += w[i] * x[i];
      sy += w[i] * y[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sxx += w[i] * (x[i] - mx) * (x[i] - mx);
      sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw DataError("power-law fit needs distinct post-peak offsets");
    b = sxy / sxx;
    c = my - b * mx;
  };

  double intercept = 0, slope = 0;
  solve(intercept, slope);
  int iter = 0;
  bool converged = false;
  while (iter < options.max_iterations) {
    ++iter;
    for (std::size_t i = 0; i < n; ++i) resid[i] = y[i] - intercept - slope * x[i];
    std::vector<double> abs_dev(n);
    const double med = median_of(resid);
    for (std::size_t i = 0; i < n; ++i) abs_dev[i] = std::abs(resid[i] - med);
    const double scale = median_of(abs_dev) / 0.6744897501960817;
    if (scale < 1e-12) {
      // Residuals are (nearly) all equal; the current fit is exact.
      converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double u = std::abs(resid[i]) / scale;
      w[i] = u <= options.huber_k ? 1.0 : options.huber_k / u;
    }
    const double previous = slope;
    solve(intercept, slope);
    if (std::abs(slope - previous) < options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError("power-law fit did not converge after " + std::to_string(iter) +
                               " iterations",
                           iter);
  }

  double my = 0;
  for (double v : y) my += v;
  my /= static_cast<double>(n);
  double ss_tot = 0, ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - intercept - slope * x[i];
    ss_res += r * r;
    ss_tot += (y[i] - my) * (y[i] - my);
  }
  PowerLawFit fit;
  fit.alpha = -slope;
  if (fit.alpha == 0.0) fit.alpha = 0.0;  // normalize -0
  fit.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-20 ? 1.0 : 0.0);
  fit.height = std::exp(intercept);
  const double peak_count = counts[static_cast<std::size_t>(peak)];
  fit.gamma = peak_count > 0.0 ? fit.height / peak_count : 0.0;
  fit.iterations = iter;
  fit.points = n;
  return fit;
}

}  // namespace clab
