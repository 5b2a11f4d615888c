#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "clab/adoption_log.hpp"
#include "clab/boosting.hpp"
#include "clab/cascade.hpp"

namespace clab {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationMetrics {
  std::array<ClassMetrics, kMechanismCount> per_class{};
  double macro_f1 = 0.0;  // over classes present in truth or predictions
  double accuracy = 0.0;
  std::size_t count = 0;
  std::array<std::array<std::size_t, kMechanismCount>, kMechanismCount> confusion{};  // [truth][pred]

  nlohmann::json to_json() const;
};

ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted);

struct TrainOptions {
  BoostParams boost;
  double holdout_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct TrainResult {
  BoostedForest model;
  ClassificationMetrics holdout;
  ClassificationMetrics training;
  std::size_t train_rows = 0;
  std::size_t holdout_rows = 0;
};

// Builds a forest with the four mechanism classes and the seven feature names.
FeatureMatrix to_matrix(std::span<const LabeledEvent> events);

// Stratified split: rows are put in canonical order, each class is shuffled
// with the seed, and round(fraction * class size) rows go to the holdout
// (leaving at least one training row per class). Returns holdout flags.
std::vector<bool> stratified_holdout(std::span<const LabeledEvent> events, double fraction,
                                     std::uint64_t seed);

// Throws DataError on empty input or fewer than two classes.
TrainResult train_classifier(std::span<const LabeledEvent> events, const TrainOptions& options = {});

struct Prediction {
  std::array<double, kMechanismCount> probabilities{};
  Mechanism label = Mechanism::Simple;
};

Prediction predict(const BoostedForest& model, const FeatureVector& x);

struct DecompositionReport {
  struct Row {
    NodeId node = 0;
    int day = 0;
    FeatureVector features;
    Prediction prediction;
  };
  std::vector<Row> events;  // ordered by (day, node)
  int first_day = 0;
  std::vector<std::array<std::size_t, kMechanismCount>> daily_counts;  // index 0 is first_day
  std::vector<std::array<double, kMechanismCount>> daily_proportions;  // zero on empty days
  std::array<double, kMechanismCount> shares{};

  nlohmann::json to_json(const DirectedGraph& g, bool include_events = true) const;
};

// Throws DataError for an empty log.
DecompositionReport decompose(const BoostedForest& model, const AdoptionLog& log, const DirectedGraph& g,
                              const ShockSchedule& shocks, std::size_t threads = 1);

}  // namespace clab
