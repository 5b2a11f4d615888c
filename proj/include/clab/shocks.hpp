#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace clab {

struct Shock {
  int tau = 0;         // peak day
  double gamma = 1.0;  // height relative to the largest shock
  double alpha = 1.0;  // power-law decay exponent
};

// Ordered exogenous shock schedule. Shock j is active on days
// tau_j <= t < tau_{j+1}; the last shock stays active to the end of time.
class ShockSchedule {
 public:
  ShockSchedule() = default;
  // Throws DataError unless peaks are strictly increasing, every alpha > 0,
  // every gamma in (0, 1] and the largest gamma equals 1.
  explicit ShockSchedule(std::vector<Shock> shocks);

  // Rescales heights so the largest is exactly 1, then validates.
  static ShockSchedule normalized(std::vector<Shock> shocks);

  bool empty() const { return shocks_.empty(); }
  std::span<const Shock> shocks() const { return shocks_; }

  // gamma_j * (t - tau_j + 1)^(-alpha_j) for the active shock, 0 before the
  // first peak. Unclamped.
  double intensity(int day) const;

  // Largest peak intensity (1 for a non-empty schedule, 0 otherwise).
  double peak_max() const { return shocks_.empty() ? 0.0 : 1.0; }

  // Days since the most recent peak at or before `day`; -1 if none yet.
  int recency(int day) const;

  nlohmann::json to_json() const;
  static ShockSchedule from_json(const nlohmann::json& j);
  static ShockSchedule load(const std::filesystem::path& path);

 private:
  // Index of the active shock, or -1.
  int active_index(int day) const;

  std::vector<Shock> shocks_;
};

// Daily adoption counts; day 0 is the series start.
struct AdoptionSeries {
  std::vector<std::int64_t> counts;

  std::vector<double> as_double() const { return {counts.begin(), counts.end()}; }
  static AdoptionSeries load(const std::filesystem::path& path);  // `day,count` CSV
};

struct DetectOptions {
  std::int64_t min_count = 150;
  int window = 30;
  double z = 3.0;
};

struct ShockRange {
  int first = 0;
  int last = 0;
  int peak = 0;  // day of the largest count inside the range (earliest on ties)
  std::int64_t peak_count = 0;
};

// Flags day t when counts[t] >= min_count and counts[t] exceeds the trailing
// window mean (days t-window .. t-1) by more than z sample standard
// deviations. Days without a full trailing window are never flagged.
// Adjacent flagged days merge into one range. Throws DataError if the series
// is not longer than the window.
std::vector<ShockRange> detect_shocks(std::span<const std::int64_t> counts,
                                      const DetectOptions& options = {});

struct PowerLawFitOptions {
  double huber_k = 1.345;
  int max_iterations = 50;
  double tolerance = 1e-8;
  int end_day = -1;  // exclusive; -1 means end of series
};

struct PowerLawFit {
  double alpha = 0.0;
  double r_squared = 0.0;
  double height = 0.0;  // fitted count at the peak day
  double gamma = 0.0;   // height / observed peak count
  int iterations = 0;
  std::size_t points = 0;
};

// Robust log-log fit of log c_t = log h - alpha * log(t - peak + 1) over
// days peak..end with positive counts, by Huber IRLS with a MAD scale.
// Throws DataError with fewer than 3 usable points and ConvergenceError if
// alpha has not settled within max_iterations.
PowerLawFit fit_power_law(std::span<const double> counts, int peak,
                          const PowerLawFitOptions& options = {});

}  // namespace clab
